//! Seeded stand-in corpus: tonal "utterances" mixed with synthetic noise.

use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::audio::peak;
use super::{mix_at_snr, split_dataset, write_wav, AudioBuffer, DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    White,
    Pink,
    /// Sum of slowly detuned, amplitude-modulated tones.
    Babble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble];

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Babble => "babble",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            "babble" | "babble-proxy" => Ok(NoiseKind::Babble),
            other => Err(Error::Config(format!("unknown noise kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub utterances: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Rate of the generated files.
    pub sample_rate: u32,
    pub snr_levels: Vec<f64>,
    /// Assigned round-robin over (utterance, SNR level).
    pub noise_kinds: Vec<NoiseKind>,
    pub split_ratios: [usize; 3],
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            utterances: 20,
            min_duration_s: 1.0,
            max_duration_s: 2.0,
            sample_rate: 16000,
            snr_levels: vec![15.0, 10.0, 5.0, 0.0],
            noise_kinds: NoiseKind::ALL.to_vec(),
            split_ratios: [8, 1, 1],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic corpus: {m}")));
        if self.utterances == 0 {
            return bad("need at least one utterance");
        }
        if !(self.min_duration_s > 0.0 && self.min_duration_s <= self.max_duration_s) {
            return bad("durations must satisfy 0 < min <= max");
        }
        if self.sample_rate < 1000 {
            return bad("sample rate below 1 kHz");
        }
        if self.snr_levels.is_empty() || self.snr_levels.iter().any(|s| !s.is_finite()) {
            return bad("SNR levels must be finite and non-empty");
        }
        if self.noise_kinds.is_empty() {
            return bad("no noise kinds");
        }
        Ok(())
    }
}

/// One generated pair, kept in memory at full precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub entry: ManifestEntry,
    pub clean: AudioBuffer,
    pub noisy: AudioBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub manifest: DatasetManifest,
    pub pairs: Vec<SynthPair>,
}

const STREAM_CLEAN: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_MIX: u64 = 3;
const CLEAN_PEAK: f64 = 0.3;
const MAX_PEAK: f64 = 0.99;

/// Independent generator for `(tag, index)` under `seed`.
pub(crate) fn sub_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 48) | index);
    rng
}

/// Sequence of harmonic tones, chirps and AM tones separated by short pauses,
/// scaled to a fixed peak.
pub fn synth_clean<R: Rng>(rng: &mut R, len: usize, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let nyq = fs / 2.0;
    let mut out = vec![0.0; len];
    let mut pos = rng.gen_range(0..(0.05 * fs) as usize + 1);
    while pos < len {
        let dur = ((rng.gen_range(0.08..0.3) * fs) as usize).min(len - pos);
        let seg = &mut out[pos..pos + dur];
        let gain = rng.gen_range(0.4..1.0);
        match rng.gen_range(0..3) {
            0 => {
                let f0 = rng.gen_range(100.0..250.0);
                let glide = rng.gen_range(-0.3..0.3);
                let harmonics = rng.gen_range(3..=6);
                let amps: Vec<f64> = (1..=harmonics).map(|h| rng.gen_range(0.5..1.0) / h as f64).collect();
                let mut phase = 0.0;
                for (i, s) in seg.iter_mut().enumerate() {
                    let t = i as f64 / dur as f64;
                    let f = f0 * (1.0 + glide * t);
                    phase += TAU * f / fs;
                    *s = amps
                        .iter()
                        .enumerate()
                        .filter(|(h, _)| f * (*h as f64 + 1.0) < nyq)
                        .map(|(h, a)| a * ((h as f64 + 1.0) * phase).sin())
                        .sum();
                }
            }
            1 => {
                let top = (0.25 * fs).min(2000.0);
                let f1 = rng.gen_range(200.0..top);
                let f2 = rng.gen_range(200.0..top);
                let mut phase = 0.0;
                for (i, s) in seg.iter_mut().enumerate() {
                    let f = f1 + (f2 - f1) * i as f64 / dur as f64;
                    phase += TAU * f / fs;
                    *s = phase.sin();
                }
            }
            _ => {
                let fc = rng.gen_range(300.0..(0.25 * fs).min(1500.0));
                let fm = rng.gen_range(3.0..8.0);
                let depth = rng.gen_range(0.3..0.9);
                let phi = rng.gen_range(0.0..TAU);
                for (i, s) in seg.iter_mut().enumerate() {
                    let t = i as f64 / fs;
                    *s = (1.0 + depth * (TAU * fm * t + phi).sin()) / (1.0 + depth) * (TAU * fc * t).sin();
                }
            }
        }
        // Raised-cosine fades avoid clicks at segment edges.
        let fade = (0.01 * fs) as usize;
        for i in 0..dur {
            let edge = i.min(dur - 1 - i);
            let w = if edge < fade {
                0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / fade as f64).cos()
            } else {
                1.0
            };
            seg[i] *= gain * w;
        }
        pos += dur + (rng.gen_range(0.02..0.1) * fs) as usize;
    }
    let p = peak(&out);
    if p > 0.0 {
        out.iter_mut().for_each(|v| *v *= CLEAN_PEAK / p);
    }
    out
}

/// Unit-scale noise of the given kind.
pub fn synth_noise<R: Rng>(rng: &mut R, kind: NoiseKind, len: usize, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    match kind {
        NoiseKind::White => (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        NoiseKind::Pink => {
            // Paul Kellet's refined pinking filter.
            let mut b = [0.0f64; 7];
            (0..len)
                .map(|_| {
                    let w: f64 = rng.sample(StandardNormal);
                    b[0] = 0.99886 * b[0] + w * 0.0555179;
                    b[1] = 0.99332 * b[1] + w * 0.0750759;
                    b[2] = 0.96900 * b[2] + w * 0.1538520;
                    b[3] = 0.86650 * b[3] + w * 0.3104856;
                    b[4] = 0.55000 * b[4] + w * 0.5329522;
                    b[5] = -0.7616 * b[5] - w * 0.0168980;
                    let y = b[..6].iter().sum::<f64>() + b[6] + w * 0.5362;
                    b[6] = w * 0.115926;
                    y
                })
                .collect()
        }
        NoiseKind::Babble => {
            let top = (0.4 * fs).min(3000.0);
            let tones: Vec<[f64; 5]> = (0..24)
                .map(|_| {
                    [
                        rng.gen_range(100.0..top),
                        rng.gen_range(0.005..0.03),
                        rng.gen_range(0.5..4.0),
                        rng.gen_range(0.0..TAU),
                        rng.gen_range(0.0..TAU),
                    ]
                })
                .collect();
            let mut phases: Vec<f64> = tones.iter().map(|t| t[3]).collect();
            (0..len)
                .map(|i| {
                    let t = i as f64 / fs;
                    tones
                        .iter()
                        .zip(phases.iter_mut())
                        .map(|(tone, ph)| {
                            let [f, detune, rate, _, am] = *tone;
                            let fi = f * (1.0 + detune * (TAU * rate * t).sin());
                            *ph += TAU * fi / fs;
                            (0.5 + 0.5 * (TAU * rate * 0.7 * t + am).sin()) * ph.sin()
                        })
                        .sum()
                })
                .collect()
        }
    }
}

/// Scales a clean signal and all its mixtures by one common gain so that no
/// peak exceeds 0.99. A common gain leaves every SNR unchanged.
pub(crate) fn limit_peak<'a>(clean: &mut [f64], mixes: impl Iterator<Item = &'a mut Vec<f64>>) {
    let mut mixes: Vec<&mut Vec<f64>> = mixes.collect();
    let worst = mixes.iter().map(|m| peak(m)).fold(peak(clean), f64::max);
    if worst > MAX_PEAK {
        let g = MAX_PEAK / worst;
        clean.iter_mut().for_each(|v| *v *= g);
        for m in &mut mixes {
            m.iter_mut().for_each(|v| *v *= g);
        }
    }
}

pub(crate) fn snr_label(snr: f64) -> String {
    let s = format!("{snr}");
    s.replace('-', "m")
}

/// Generates the corpus, writes WAVs and `manifest.tsv` under `out_dir`,
/// and assigns splits.
///
/// Each utterance draws from its own seeded stream, so output does not
/// depend on generation order. If any mixture of an utterance would exceed a
/// peak of 0.99, the clean signal and all its mixtures are scaled down
/// together, which leaves every SNR unchanged.
pub fn synth_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<SynthCorpus> {
    spec.validate()?;
    let rate = spec.sample_rate;
    let mut pairs = Vec::with_capacity(spec.utterances * spec.snr_levels.len());
    for u in 0..spec.utterances {
        let mut rng = sub_rng(spec.seed, STREAM_CLEAN, u as u64);
        let dur = rng.gen_range(spec.min_duration_s..=spec.max_duration_s);
        let len = (dur * rate as f64).round() as usize;
        let mut clean = synth_clean(&mut rng, len, rate);
        let mut mixes = Vec::with_capacity(spec.snr_levels.len());
        for (j, &snr) in spec.snr_levels.iter().enumerate() {
            let index = (u * spec.snr_levels.len() + j) as u64;
            let kind = spec.noise_kinds[(u + j) % spec.noise_kinds.len()];
            let mut nrng = sub_rng(spec.seed, STREAM_NOISE, index);
            let noise = synth_noise(&mut nrng, kind, len + rate as usize / 2, rate);
            let mut mrng = sub_rng(spec.seed, STREAM_MIX, index);
            mixes.push((kind, snr, mix_at_snr(&clean, &noise, snr, &mut mrng)?.noisy));
        }
        limit_peak(&mut clean, mixes.iter_mut().map(|m| &mut m.2));
        let clean_path = format!("clean/utt{u:03}.wav");
        let clean_buf = AudioBuffer::new(rate, clean);
        write_wav(&out_dir.join(&clean_path), &clean_buf)?;
        for (kind, snr, noisy) in mixes {
            let noisy_path = format!("noisy/utt{u:03}_{kind}_{}db.wav", snr_label(snr));
            let noisy_buf = AudioBuffer::new(rate, noisy);
            write_wav(&out_dir.join(&noisy_path), &noisy_buf)?;
            pairs.push(SynthPair {
                entry: ManifestEntry {
                    clean: clean_path.clone().into(),
                    noisy: noisy_path.into(),
                    split: Split::Train,
                    noise: kind.to_string(),
                    snr_db: snr,
                },
                clean: clean_buf.clone(),
                noisy: noisy_buf,
            });
        }
    }
    let manifest = DatasetManifest {
        seed: spec.seed,
        sample_rate: rate,
        entries: pairs.iter().map(|p| p.entry.clone()).collect(),
    };
    let manifest = split_dataset(manifest, spec.split_ratios, spec.seed)?;
    for (p, e) in pairs.iter_mut().zip(&manifest.entries) {
        p.entry.split = e.split;
    }
    manifest.save(&out_dir.join("manifest.tsv"))?;
    Ok(SynthCorpus { manifest, pairs })
}
