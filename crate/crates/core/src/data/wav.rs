use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioBuffer;
use crate::error::{Error, Result};

fn wav_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a mono 16- or 24-bit PCM file; integer samples are divided by
/// `2^(bits−1)`.
pub fn load_wav(path: &Path) -> Result<AudioBuffer> {
    let reader = WavReader::open(path).map_err(|e| wav_err(path, e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(wav_err(
            path,
            format!("expected mono audio, found {} channels", spec.channels),
        ));
    }
    if spec.sample_format != SampleFormat::Int || !matches!(spec.bits_per_sample, 16 | 24) {
        return Err(wav_err(
            path,
            format!(
                "unsupported encoding: {:?} {}-bit (need 16- or 24-bit PCM)",
                spec.sample_format, spec.bits_per_sample
            ),
        ));
    }
    let expected = reader.len() as usize;
    let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
    let samples = reader
        .into_samples::<i32>()
        .map(|s| s.map(|v| f64::from(v) * scale))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_err(path, e.to_string()))?;
    if samples.len() != expected {
        return Err(wav_err(
            path,
            format!("truncated: header promises {expected} samples, found {}", samples.len()),
        ));
    }
    Ok(AudioBuffer::new(spec.sample_rate, samples))
}

/// Writes 16-bit mono PCM, clamping to the representable range.
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| wav_err(path, e.to_string()))?;
    for &v in &audio.samples {
        let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(q).map_err(|e| wav_err(path, e.to_string()))?;
    }
    w.finalize().map_err(|e| wav_err(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_round_trip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ramp.wav");
        let x: Vec<f64> = (0..2000).map(|i| -1.0 + i as f64 / 1000.0).collect();
        write_wav(&path, &AudioBuffer::new(16000, x.clone())).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.len(), x.len());
        for (a, b) in x.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 2f64.powi(-15), "{a} vs {b}");
        }
    }

    fn write_raw(path: &Path, channels: u16, bits: u16, values: &[i32]) {
        let spec = WavSpec {
            channels,
            sample_rate: 8000,
            bits_per_sample: bits,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &v in values {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn twenty_four_bit_full_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s24.wav");
        write_raw(&path, 1, 24, &[(1 << 23) - 1, -(1 << 23), 0]);
        let a = load_wav(&path).unwrap();
        assert!((a.samples[0] - 0.999_999_880_790_710_4).abs() < 1e-15);
        assert_eq!(a.samples[1], -1.0);
        assert_eq!(a.samples[2], 0.0);
    }

    #[test]
    fn stereo_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        write_raw(&path, 2, 16, &[1, 2, 3, 4]);
        let err = load_wav(&path).unwrap_err();
        assert!(err.to_string().contains("mono"), "{err}");
    }

    #[test]
    fn eight_bit_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u8.wav");
        write_raw(&path, 1, 8, &[1, 2, 3]);
        assert!(load_wav(&path).unwrap_err().to_string().contains("unsupported"));
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.wav");
        write_wav(&path, &AudioBuffer::new(16000, vec![0.25; 100])).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 51]).unwrap();
        assert!(load_wav(&path).is_err());
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(load_wav(&path).is_err());
    }
}
