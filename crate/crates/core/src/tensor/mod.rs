//! Minimal reverse-mode autodiff over batched 1-D feature maps.
//!
//! Values live in [`Tensor3`] (batch, channels, length), row-major. A
//! [`Tape`] records every operation applied to its nodes so that
//! [`Tape::backward`] can replay them in reverse. Training runs in `f32`;
//! gradient checks run the same code in `f64`.

mod kernels;
mod optim;
mod tape;

pub use kernels::{conv_output_len, transposed_output_len, ConvGeometry};
pub use optim::{AdamConfig, OptimizerState};
pub use tape::{Tape, Var};

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{shape_err, Result};

/// Floating point element type of the engine.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Batched 1-D feature map, row-major in (batch, channel, position).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    batch: usize,
    channels: usize,
    length: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(batch: usize, channels: usize, length: usize) -> Self {
        Self::filled(batch, channels, length, T::zero())
    }

    pub fn filled(batch: usize, channels: usize, length: usize, value: T) -> Self {
        Self {
            batch,
            channels,
            length,
            data: vec![value; batch * channels * length],
        }
    }

    /// Wraps `data` as a (batch, channels, length) map.
    ///
    /// A zero channel count is accepted so that an empty map can take part
    /// in channel concatenation; batch and length must be positive.
    pub fn from_vec(batch: usize, channels: usize, length: usize, data: Vec<T>) -> Result<Self> {
        if batch == 0 || length == 0 {
            return shape_err(format!(
                "batch and length must be positive, got ({batch}, {channels}, {length})"
            ));
        }
        if data.len() != batch * channels * length {
            return shape_err(format!(
                "{} values cannot fill shape ({batch}, {channels}, {length})",
                data.len()
            ));
        }
        Ok(Self {
            batch,
            channels,
            length,
            data,
        })
    }

    /// Single-row tensor of shape (1, 1, len).
    pub fn from_signal(samples: &[T]) -> Result<Self> {
        Self::from_vec(1, 1, samples.len(), samples.to_vec())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.length)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, b: usize, c: usize, t: usize) -> T {
        self.data[(b * self.channels + c) * self.length + t]
    }

    pub fn row(&self, b: usize, c: usize) -> &[T] {
        let start = (b * self.channels + c) * self.length;
        &self.data[start..start + self.length]
    }

    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let start = (b * self.channels + c) * self.length;
        &mut self.data[start..start + self.length]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element type conversion; used to run the `f32` model in `f64`.
    pub fn cast<U: Real>(&self) -> Tensor3<U> {
        Tensor3 {
            batch: self.batch,
            channels: self.channels,
            length: self.length,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }
}
