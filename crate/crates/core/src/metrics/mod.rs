//! Objective quality measures and report tables.
//!
//! All measures take time-aligned waveforms in the original (de-normalized)
//! amplitude domain.

mod pesq;
mod report;
mod snr;
mod stoi;

pub use pesq::{pesq_external, PesqCommand};
pub use report::{evaluate, EvalPair, MetricMeans, MetricSet, MetricsReport, MetricsRow, SystemReport};
pub use snr::{snr, ssnr, ssnr_with, SNR_CAP_DB, SSNR_FRAME, SSNR_MAX_DB, SSNR_MIN_DB};
pub use stoi::{stoi, StoiConfig};
