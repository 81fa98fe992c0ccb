use rand::Rng;

use crate::error::{Error, Result};

/// Result of [`mix_at_snr`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub noisy: Vec<f64>,
    /// Gain applied to the fitted noise.
    pub alpha: f64,
    /// Offset into the noise recording where the fitted segment starts.
    pub noise_offset: usize,
}

/// Mean square value.
pub fn signal_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Cuts `len` samples out of `noise` from a random offset, wrapping around
/// (tiling) when the noise is shorter than `len`.
pub fn fit_noise<R: Rng>(noise: &[f64], len: usize, rng: &mut R) -> Result<(Vec<f64>, usize)> {
    if noise.is_empty() {
        return Err(Error::Signal("noise recording is empty".into()));
    }
    let offset = if noise.len() >= len {
        rng.gen_range(0..=noise.len() - len)
    } else {
        rng.gen_range(0..noise.len())
    };
    let fitted = (0..len).map(|i| noise[(offset + i) % noise.len()]).collect();
    Ok((fitted, offset))
}

/// `clean + α·noise` with `α = √(P_clean/P_noise)·10^(−snr/20)`, powers taken
/// over the fitted noise segment.
pub fn mix_at_snr<R: Rng>(clean: &[f64], noise: &[f64], snr_db: f64, rng: &mut R) -> Result<Mixture> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("target SNR {snr_db} is not finite")));
    }
    let p_clean = signal_power(clean);
    if p_clean <= 0.0 {
        return Err(Error::Signal("clean signal has zero power".into()));
    }
    let (fitted, noise_offset) = fit_noise(noise, clean.len(), rng)?;
    let p_noise = signal_power(&fitted);
    if p_noise <= 0.0 {
        return Err(Error::Signal("noise segment has zero power".into()));
    }
    let alpha = (p_clean / p_noise).sqrt() * 10f64.powf(-snr_db / 20.0);
    let noisy = clean.iter().zip(&fitted).map(|(c, n)| c + alpha * n).collect();
    Ok(Mixture {
        noisy,
        alpha,
        noise_offset,
    })
}
