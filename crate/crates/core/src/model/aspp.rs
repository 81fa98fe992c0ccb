//! Grouped multi-dilation convolution.
//!
//! Output channel `g·n + j` belongs to dilation group `g` and uses dilation
//! `factors[j]`, where `n = factors.len()`. Each filter is a full
//! `(c_in, f)` kernel, so the layer has exactly the parameters of a plain
//! convolution with the same `c_in`, `c_out` and `f`.

use crate::error::{Error, Result};
use crate::tensor::{ConvGeometry, Real, Tape, Var};

pub const DEFAULT_FACTORS: [usize; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsppLayerSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub f: usize,
    pub factors: Vec<usize>,
}

impl AsppLayerSpec {
    pub fn new(c_in: usize, c_out: usize, f: usize, factors: Vec<usize>) -> Result<Self> {
        let spec = Self {
            c_in,
            c_out,
            f,
            factors,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() || self.factors.contains(&0) {
            return Err(Error::Config("dilation factors must be positive".into()));
        }
        if self.c_in == 0 || self.f == 0 {
            return Err(Error::Config("ASPP needs c_in > 0 and f > 0".into()));
        }
        if self.c_out == 0 || self.c_out % self.factors.len() != 0 {
            return Err(Error::Config(format!(
                "ASPP output width {} is not a positive multiple of {} dilation factors",
                self.c_out,
                self.factors.len()
            )));
        }
        Ok(())
    }

    /// Number of dilation groups, `c_out / |factors|`.
    pub fn groups(&self) -> usize {
        self.c_out / self.factors.len()
    }

    pub fn dilation_of(&self, channel: usize) -> usize {
        self.factors[channel % self.factors.len()]
    }

    /// Length-preserving geometry of every output channel.
    pub fn geometries(&self) -> Vec<ConvGeometry> {
        (0..self.c_out)
            .map(|o| ConvGeometry::same(self.f, self.dilation_of(o)))
            .collect()
    }

    pub fn params_per_filter(&self) -> usize {
        self.c_in * self.f
    }

    pub fn param_count(&self) -> usize {
        self.c_out * self.c_in * self.f + self.c_out
    }
}

/// Applies the layer: `w` is (c_out, c_in, f), `b` has `c_out` values.
pub fn aspp_forward<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, b: Var, spec: &AsppLayerSpec) -> Result<Var> {
    spec.validate()?;
    tape.conv1d_per_channel(x, w, b, spec.geometries())
}
