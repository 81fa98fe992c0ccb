use crate::error::{Error, Result};

/// Value reported when the error signal is exactly zero.
pub const SNR_CAP_DB: f64 = 100.0;
/// 16 ms at 16 kHz.
pub const SSNR_FRAME: usize = 256;
pub const SSNR_MIN_DB: f64 = -10.0;
pub const SSNR_MAX_DB: f64 = 35.0;

fn check_lengths(clean: &[f64], test: &[f64]) -> Result<()> {
    if clean.len() != test.len() {
        return Err(Error::Signal(format!(
            "length mismatch: clean {} vs test {}",
            clean.len(),
            test.len()
        )));
    }
    Ok(())
}

fn energies(clean: &[f64], test: &[f64]) -> (f64, f64) {
    clean.iter().zip(test).fold((0.0, 0.0), |(s, e), (c, t)| {
        (s + c * c, e + (c - t) * (c - t))
    })
}

/// `10·log10(Σ clean² / Σ (clean − test)²)`, capped at [`SNR_CAP_DB`].
pub fn snr(clean: &[f64], test: &[f64]) -> Result<f64> {
    check_lengths(clean, test)?;
    let (signal, error) = energies(clean, test);
    if signal <= 0.0 {
        return Err(Error::Signal("clean signal has zero power".into()));
    }
    if error == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (signal / error).log10()).min(SNR_CAP_DB))
}

/// Segmental SNR over non-overlapping 256-sample frames.
pub fn ssnr(clean: &[f64], test: &[f64]) -> Result<f64> {
    ssnr_with(clean, test, SSNR_FRAME)
}

/// Mean of per-frame SNRs clamped to `[−10, 35]` dB. Frames with zero clean
/// energy are skipped; a trailing partial frame counts as a frame.
pub fn ssnr_with(clean: &[f64], test: &[f64], frame: usize) -> Result<f64> {
    check_lengths(clean, test)?;
    if frame == 0 {
        return Err(Error::InvalidArgument("frame length must be positive".into()));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (c, t) in clean.chunks(frame).zip(test.chunks(frame)) {
        let (signal, error) = energies(c, t);
        if signal <= 0.0 {
            continue;
        }
        let db = if error == 0.0 {
            SSNR_MAX_DB
        } else {
            (10.0 * (signal / error).log10()).clamp(SSNR_MIN_DB, SSNR_MAX_DB)
        };
        sum += db;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Signal("no frame has nonzero clean energy".into()));
    }
    Ok(sum / n as f64)
}
