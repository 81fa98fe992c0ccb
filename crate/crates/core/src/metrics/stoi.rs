//! Short-time objective intelligibility.
//!
//! Follows the widely used reference procedure: resample to 10 kHz, drop
//! frames more than 40 dB below the loudest clean frame, take 512-point
//! spectra of 256-sample Hann frames at 50% overlap, pool into 15 one-third
//! octave bands from 150 Hz, and average per-band envelope correlations over
//! 30-frame segments after normalizing and clipping the test envelope.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::data::{resample, AudioBuffer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoiConfig {
    pub sample_rate: u32,
    pub frame: usize,
    pub fft: usize,
    pub bands: usize,
    pub min_freq: f64,
    /// Frames per envelope segment.
    pub segment: usize,
    /// Lower signal-to-distortion bound in dB.
    pub beta_db: f64,
    pub dyn_range_db: f64,
}

impl Default for StoiConfig {
    fn default() -> Self {
        Self {
            sample_rate: 10000,
            frame: 256,
            fft: 512,
            bands: 15,
            min_freq: 150.0,
            segment: 30,
            beta_db: -15.0,
            dyn_range_db: 40.0,
        }
    }
}

const EPS: f64 = f64::EPSILON;

/// STOI of `test` against `clean`, both at `sample_rate`, clipped to `[0, 1]`.
pub fn stoi(clean: &[f64], test: &[f64], sample_rate: u32) -> Result<f64> {
    stoi_with(clean, test, sample_rate, &StoiConfig::default())
}

pub fn stoi_with(clean: &[f64], test: &[f64], sample_rate: u32, cfg: &StoiConfig) -> Result<f64> {
    if clean.len() != test.len() {
        return Err(Error::Signal(format!(
            "length mismatch: clean {} vs test {}",
            clean.len(),
            test.len()
        )));
    }
    let to_rate = |x: &[f64]| resample(&AudioBuffer::new(sample_rate, x.to_vec()), cfg.sample_rate).samples;
    let (x, y) = (to_rate(clean), to_rate(test));
    let hop = cfg.frame / 2;
    let window = hann(cfg.frame);
    let (x, y) = remove_silent_frames(&x, &y, &window, hop, cfg.dyn_range_db);

    let x_spec = stft(&x, &window, hop, cfg.fft);
    let y_spec = stft(&y, &window, hop, cfg.fft);
    let frames = x_spec.len();
    if frames < cfg.segment {
        return Err(Error::Signal(format!(
            "only {frames} non-silent frames; STOI needs at least {}",
            cfg.segment
        )));
    }
    let bands = third_octave_bands(cfg.sample_rate as f64, cfg.fft, cfg.bands, cfg.min_freq);
    let x_tob = band_envelopes(&x_spec, &bands);
    let y_tob = band_envelopes(&y_spec, &bands);

    let clip = 10f64.powf(-cfg.beta_db / 20.0);
    let n = cfg.segment;
    let mut total = 0.0;
    let segments = frames - n + 1;
    for m in 0..segments {
        for (xb, yb) in x_tob.iter().zip(&y_tob) {
            let xs = &xb[m..m + n];
            let ys = &yb[m..m + n];
            let alpha = norm(xs) / (norm(ys) + EPS);
            let yp: Vec<f64> = ys
                .iter()
                .zip(xs)
                .map(|(&yv, &xv)| (yv * alpha).min(xv * (1.0 + clip)))
                .collect();
            total += correlation(xs, &yp);
        }
    }
    let score = total / (segments * bands.len()) as f64;
    Ok(score.clamp(0.0, 1.0))
}

/// Symmetric Hann window without its zero end points.
fn hann(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

/// Start offsets of the analysis frames; the frame ending exactly at the
/// signal end is excluded, as in the reference procedure.
fn frame_starts(len: usize, frame: usize, hop: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(frame)).step_by(hop)
}

fn remove_silent_frames(x: &[f64], y: &[f64], window: &[f64], hop: usize, dyn_range: f64) -> (Vec<f64>, Vec<f64>) {
    let frame = window.len();
    let windowed = |s: &[f64], start: usize| -> Vec<f64> {
        s[start..start + frame].iter().zip(window).map(|(a, w)| a * w).collect()
    };
    let starts: Vec<usize> = frame_starts(x.len(), frame, hop).collect();
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| 20.0 * (norm(&windowed(x, s)) + EPS).log10())
        .collect();
    let loudest = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| loudest - dyn_range - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (kept.len() - 1) * hop + frame;
    let mut xo = vec![0.0; out_len];
    let mut yo = vec![0.0; out_len];
    for (k, &s) in kept.iter().enumerate() {
        for (i, (a, b)) in windowed(x, s).into_iter().zip(windowed(y, s)).enumerate() {
            xo[k * hop + i] += a;
            yo[k * hop + i] += b;
        }
    }
    (xo, yo)
}

/// Magnitude-squared one-sided spectra, one row per frame.
fn stft(x: &[f64], window: &[f64], hop: usize, fft: usize) -> Vec<Vec<f64>> {
    let plan = FftPlanner::<f64>::new().plan_fft_forward(fft);
    let bins = fft / 2 + 1;
    frame_starts(x.len(), window.len(), hop)
        .map(|s| {
            let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); fft];
            for (i, w) in window.iter().enumerate() {
                buf[i] = Complex::new(x[s + i] * w, 0.0);
            }
            plan.process(&mut buf);
            buf[..bins].iter().map(|c| c.norm_sqr()).collect()
        })
        .collect()
}

/// Half-open FFT-bin ranges of the one-third-octave bands.
fn third_octave_bands(fs: f64, fft: usize, bands: usize, min_freq: f64) -> Vec<std::ops::Range<usize>> {
    let bins = fft / 2 + 1;
    let freq = |b: usize| b as f64 * fs / fft as f64;
    let nearest = |target: f64| {
        (0..bins)
            .min_by(|&a, &b| {
                let da = (freq(a) - target).powi(2);
                let db = (freq(b) - target).powi(2);
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            })
            .unwrap_or(0)
    };
    (0..bands)
        .map(|k| {
            let k = k as f64;
            let lo = nearest(min_freq * 2f64.powf((2.0 * k - 1.0) / 6.0));
            let hi = nearest(min_freq * 2f64.powf((2.0 * k + 1.0) / 6.0));
            lo..hi
        })
        .collect()
}

/// Per-band envelopes, `[band][frame]`.
fn band_envelopes(spec: &[Vec<f64>], bands: &[std::ops::Range<usize>]) -> Vec<Vec<f64>> {
    bands
        .iter()
        .map(|r| spec.iter().map(|row| row[r.clone()].iter().sum::<f64>().sqrt()).collect())
        .collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let xc: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let yc: Vec<f64> = y.iter().map(|v| v - my).collect();
    let dot: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
    dot / ((norm(&xc) + EPS) * (norm(&yc) + EPS))
}
