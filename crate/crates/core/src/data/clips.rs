use std::path::Path;

use super::{load_wav, resample, AudioBuffer, DatasetManifest, NormMeta, Split};
use crate::error::{Error, Result};

/// Clip length, hop and minimum kept length, all in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipLayout {
    pub clip: usize,
    pub hop: usize,
    pub min_keep: usize,
}

impl ClipLayout {
    /// 1 s clips every 0.5 s, keeping trailing clips of at least 0.5 s.
    pub fn standard(sample_rate: u32) -> Self {
        let rate = sample_rate as usize;
        Self {
            clip: rate,
            hop: rate / 2,
            min_keep: rate / 2,
        }
    }

    pub fn from_seconds(sample_rate: u32, clip_s: f64, hop_s: f64) -> Result<Self> {
        let clip = (clip_s * sample_rate as f64).round() as usize;
        let hop = (hop_s * sample_rate as f64).round() as usize;
        let layout = Self {
            clip,
            hop,
            min_keep: clip / 2,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clip == 0 || self.hop == 0 || self.hop > self.clip || self.min_keep > self.clip {
            return Err(Error::Config(format!(
                "invalid clip layout: clip {} hop {} min_keep {}",
                self.clip, self.hop, self.min_keep
            )));
        }
        Ok(())
    }
}

/// Aligned, normalized clean/noisy clip of fixed length.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPair {
    pub clean: Vec<f32>,
    pub noisy: Vec<f32>,
    pub source_id: String,
    /// Offset of the clip in the source utterance, in samples.
    pub start: usize,
    /// Real samples at the front of the clip; the rest is padding.
    pub valid_len: usize,
    pub meta: NormMeta,
}

/// Number of clips `segment` keeps for an utterance of `len` samples.
///
/// Full clips start at multiples of the hop. A trailing partial clip starts at
/// the next hop, exists only if some samples are not covered by a full clip,
/// and is kept when it holds at least `min_keep` real samples.
pub fn expected_clip_count(len: usize, layout: ClipLayout) -> usize {
    let full = if len >= layout.clip {
        (len - layout.clip) / layout.hop + 1
    } else {
        0
    };
    let covered = if full == 0 {
        0
    } else {
        (full - 1) * layout.hop + layout.clip
    };
    let trailing = if len > covered { len - full * layout.hop } else { 0 };
    full + usize::from(trailing > 0 && trailing >= layout.min_keep)
}

/// Normalizes a pair with the noisy peak and cuts it into clips.
///
/// Padding after the valid samples is the normalized image of silence.
pub fn segment(clean: &AudioBuffer, noisy: &AudioBuffer, layout: ClipLayout, source_id: &str) -> Result<Vec<ClipPair>> {
    layout.validate()?;
    if clean.len() != noisy.len() || clean.sample_rate != noisy.sample_rate {
        return Err(Error::Dataset(format!(
            "{source_id}: clean ({} samples @ {} Hz) and noisy ({} samples @ {} Hz) are not aligned",
            clean.len(),
            clean.sample_rate,
            noisy.len(),
            noisy.sample_rate
        )));
    }
    let meta = NormMeta::from_peak(noisy.peak());
    let len = clean.len();
    let count = expected_clip_count(len, layout);
    let pad = meta.apply(0.0) as f32;
    let cut = |x: &[f64], start: usize, valid: usize| -> Vec<f32> {
        let mut v: Vec<f32> = x[start..start + valid].iter().map(|&s| meta.apply(s) as f32).collect();
        v.resize(layout.clip, pad);
        v
    };
    Ok((0..count)
        .map(|k| {
            let start = k * layout.hop;
            let valid = layout.clip.min(len - start);
            ClipPair {
                clean: cut(&clean.samples, start, valid),
                noisy: cut(&noisy.samples, start, valid),
                source_id: source_id.to_string(),
                start,
                valid_len: valid,
                meta,
            }
        })
        .collect())
}

/// Loads every pair of one split, resampling to `sample_rate` when needed,
/// and segments it.
pub fn load_clip_set(
    manifest: &DatasetManifest,
    root: &Path,
    split: Split,
    sample_rate: u32,
    layout: ClipLayout,
) -> Result<Vec<ClipPair>> {
    let mut clips = Vec::new();
    for entry in manifest.entries.iter().filter(|e| e.split == split) {
        let (clean, noisy) = entry.load(root, sample_rate)?;
        clips.extend(segment(&clean, &noisy, layout, &entry.id())?);
    }
    Ok(clips)
}

pub(crate) fn load_at_rate(path: &Path, sample_rate: u32) -> Result<AudioBuffer> {
    let audio = load_wav(path)?;
    Ok(if audio.sample_rate == sample_rate {
        audio
    } else {
        resample(&audio, sample_rate)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(len: usize) -> (AudioBuffer, AudioBuffer) {
        let x: Vec<f64> = (0..len).map(|i| (i as f64 * 0.01).sin() * 0.5).collect();
        let n: Vec<f64> = x.iter().map(|v| v * 0.9 + 0.01).collect();
        (AudioBuffer::new(16000, x), AudioBuffer::new(16000, n))
    }

    #[test]
    fn two_and_a_quarter_seconds() {
        let (c, n) = pair(36000);
        let clips = segment(&c, &n, ClipLayout::standard(16000), "u").unwrap();
        let starts: Vec<usize> = clips.iter().map(|c| c.start).collect();
        assert_eq!(starts, vec![0, 8000, 16000, 24000]);
        assert_eq!(clips[3].valid_len, 12000);
        assert!(clips.iter().all(|c| c.clean.len() == 16000 && c.noisy.len() == 16000));
        assert!(clips[3].clean[12000..].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn boundary_durations() {
        let l = ClipLayout::standard(16000);
        assert_eq!(expected_clip_count(16000, l), 1);
        assert_eq!(expected_clip_count(6400, l), 0);
        assert_eq!(expected_clip_count(8000, l), 1);
        assert_eq!(expected_clip_count(7999, l), 0);
        assert_eq!(expected_clip_count(0, l), 0);
    }

    #[test]
    fn misaligned_pair_is_rejected() {
        let (c, _) = pair(100);
        let (_, n) = pair(101);
        assert!(segment(&c, &n, ClipLayout::standard(16000), "u").is_err());
    }

    #[test]
    fn pair_shares_noisy_peak_meta() {
        let (c, n) = pair(20000);
        let clips = segment(&c, &n, ClipLayout::standard(16000), "u").unwrap();
        let expect = NormMeta::from_peak(n.peak());
        assert!(clips.iter().all(|k| k.meta == expect));
    }
}
