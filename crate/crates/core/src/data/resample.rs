use std::f64::consts::PI;

use super::AudioBuffer;

/// Windowed-sinc resampler settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResamplerConfig {
    /// Input samples weighted per output sample.
    pub taps: usize,
    /// Passband edge as a fraction of the lower rate's Nyquist frequency.
    pub cutoff: f64,
    /// Kaiser window shape parameter.
    pub beta: f64,
}

impl Default for ResamplerConfig {
    fn default() -> Self {
        Self {
            taps: 64,
            cutoff: 0.9,
            beta: 8.6,
        }
    }
}

/// Band-limited resampling to `target_rate` with default settings.
///
/// Output length is `round(L·target/source)`; equal rates return a copy.
pub fn resample(input: &AudioBuffer, target_rate: u32) -> AudioBuffer {
    resample_with(input, target_rate, ResamplerConfig::default())
}

pub fn resample_with(input: &AudioBuffer, target_rate: u32, cfg: ResamplerConfig) -> AudioBuffer {
    let src = u64::from(input.sample_rate);
    let dst = u64::from(target_rate);
    if src == dst || input.is_empty() {
        return AudioBuffer::new(target_rate, input.samples.clone());
    }
    let len = input.len() as u64;
    let out_len = ((len * dst + src / 2) / src) as usize;

    // Cutoff in cycles per input sample.
    let fc = cfg.cutoff * 0.5 * (src.min(dst) as f64) / src as f64;
    let half = cfg.taps as f64 / 2.0;
    let i0_beta = bessel_i0(cfg.beta);
    let x = &input.samples;
    let n_in = x.len() as i64;

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        // Exact position n·src/dst split into integer and fractional parts.
        let num = n * src;
        let base = (num / dst) as i64;
        let frac = (num % dst) as f64 / dst as f64;
        let first = base - (cfg.taps as i64 / 2 - 1);
        let mut acc = 0.0;
        for k in 0..cfg.taps as i64 {
            let i = first + k;
            if i < 0 || i >= n_in {
                continue;
            }
            let tau = i as f64 - base as f64 - frac;
            let r = tau / half;
            if r.abs() >= 1.0 {
                continue;
            }
            let window = bessel_i0(cfg.beta * (1.0 - r * r).sqrt()) / i0_beta;
            acc += x[i as usize] * 2.0 * fc * sinc(2.0 * fc * tau) * window;
        }
        out.push(acc);
    }
    AudioBuffer::new(target_rate, out)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut sum, mut term, mut k) = (1.0, 1.0, 1.0);
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}
