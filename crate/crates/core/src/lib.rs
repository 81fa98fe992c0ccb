//! Waveform-to-waveform speech enhancement with a 1-D U-Net.
//!
//! * [`tensor`]: reverse-mode autodiff over (batch, channels, length) maps.
//! * [`rf`]: analytic and empirical receptive fields.
//! * [`model`]: the baseline network, its ASPP variants and checkpoints.
//! * [`data`]: WAV I/O, resampling, normalization, clips, mixing, corpora.
//! * [`metrics`]: SNR, segmental SNR, STOI and report tables.
//! * [`harness`]: the experiment driver behind the `sunet` CLI.

pub mod data;
pub mod error;
pub mod harness;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod rf;
pub mod tensor;

pub use error::{Error, Result};
