//! Receptive-field accounting along an encoding path.
//!
//! The analytic growth rule is `R_k = R_{k−1} + (f_k − 1)·d_k·∏_{i<k} s_i`
//! with `R_0 = 1`; a pooling window of size `f` and stride `s` counts as a
//! stride-`s` convolution of size `f`. [`empirical_rf`] measures the same
//! quantity from input-gradient support so the two can be cross-checked.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::tensor::{ConvGeometry, Tape, Tensor3, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Pool,
    Upsample,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Conv => "conv",
            LayerKind::Pool => "pool",
            LayerKind::Upsample => "upsample",
        })
    }
}

/// Filter size `f`, stride `s` and dilation `d` of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub f: usize,
    pub s: usize,
    pub d: usize,
}

impl LayerSpec {
    pub fn conv(f: usize, s: usize, d: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            f,
            s,
            d,
        }
    }

    pub fn pool(window: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Pool,
            f: window,
            s: stride,
            d: 1,
        }
    }

    pub fn upsample(f: usize, s: usize) -> Self {
        Self {
            kind: LayerKind::Upsample,
            f,
            s,
            d: 1,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.f == 0 || self.s == 0 || self.d == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer {index}: f, s and d must be positive (got f={}, s={}, d={})",
                self.f, self.s, self.d
            )));
        }
        match self.kind {
            LayerKind::Upsample => Err(Error::InvalidArgument(format!(
                "layer {index}: upsampling layers are outside the encoding path"
            ))),
            LayerKind::Pool if self.d != 1 => Err(Error::InvalidArgument(format!(
                "layer {index}: pooling layers have no dilation"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RfEntry {
    /// 0 is the input itself; layer `k` of the list is entry `k`.
    pub index: usize,
    pub layer: Option<LayerSpec>,
    /// Receptive field in input samples.
    pub rf: usize,
    /// Product of the strides of this layer and all before it.
    pub stride_product: usize,
}

impl RfEntry {
    pub fn seconds(&self, sample_rate: f64) -> f64 {
        coverage_seconds(self.rf, sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RfReport {
    pub entries: Vec<RfEntry>,
}

impl RfReport {
    pub fn final_rf(&self) -> usize {
        self.entries.last().map_or(1, |e| e.rf)
    }

    pub fn rfs(&self) -> Vec<usize> {
        self.entries.iter().skip(1).map(|e| e.rf).collect()
    }

    /// Plain-text table: layer, kind, f, s, d, R_k, stride product and
    /// coverage in seconds at `sample_rate`.
    pub fn render(&self, sample_rate: f64) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>5}  {:<8} {:>4} {:>3} {:>3} {:>8} {:>7} {:>10}",
            "layer", "kind", "f", "s", "d", "R_k", "stride", "seconds"
        );
        for e in &self.entries {
            let (kind, f, s, d) = match e.layer {
                Some(l) => (l.kind.to_string(), l.f.to_string(), l.s.to_string(), l.d.to_string()),
                None => ("input".into(), "-".into(), "-".into(), "-".into()),
            };
            let _ = writeln!(
                out,
                "{:>5}  {:<8} {:>4} {:>3} {:>3} {:>8} {:>7} {:>10.4}",
                e.index,
                kind,
                f,
                s,
                d,
                e.rf,
                e.stride_product,
                e.seconds(sample_rate)
            );
        }
        let _ = writeln!(
            out,
            "final encoder RF: {} samples = {:.4} s at {} Hz",
            self.final_rf(),
            coverage_seconds(self.final_rf(), sample_rate),
            sample_rate
        );
        out
    }
}

/// Exact integer receptive field after every layer of an encoding path.
pub fn receptive_field(layers: &[LayerSpec]) -> Result<RfReport> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("empty layer list".into()));
    }
    let mut entries = Vec::with_capacity(layers.len() + 1);
    entries.push(RfEntry {
        index: 0,
        layer: None,
        rf: 1,
        stride_product: 1,
    });
    let (mut rf, mut jump) = (1usize, 1usize);
    for (k, layer) in layers.iter().enumerate() {
        layer.validate(k + 1)?;
        rf += (layer.f - 1) * layer.d * jump;
        jump *= layer.s;
        entries.push(RfEntry {
            index: k + 1,
            layer: Some(*layer),
            rf,
            stride_product: jump,
        });
    }
    Ok(RfReport { entries })
}

/// Temporal coverage of `rf` samples.
pub fn coverage_seconds(rf: usize, sample_rate: f64) -> f64 {
    rf as f64 / sample_rate
}

/// Input-gradient support of one output unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradientSupport {
    pub first: usize,
    pub last: usize,
    /// Number of input positions with a nonzero gradient.
    pub count: usize,
}

impl GradientSupport {
    /// Distance from the first to the last influencing sample, inclusive.
    pub fn extent(&self) -> usize {
        self.last - self.first + 1
    }
}

/// Gradient support of output `(channel 0, position)` of `forward` applied to
/// a `(1, 1, input_len)` input of ones.
///
/// Callers must make every weight positive so that no path cancels. Errors
/// with [`Error::RfClipped`] if the support reaches either end of the input.
pub fn gradient_support<F>(forward: F, input_len: usize, position: usize) -> Result<GradientSupport>
where
    F: FnOnce(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.param(Tensor3::filled(1, 1, input_len, 1.0));
    let y = forward(&mut tape, x)?;
    let picked = tape.pick(y, 0, 0, position)?;
    tape.backward(picked)?;
    let grad = tape
        .grad(x)
        .ok_or_else(|| Error::InvalidArgument("output does not depend on the input".into()))?;
    let nonzero: Vec<usize> = grad
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &g)| g != 0.0)
        .map(|(i, _)| i)
        .collect();
    let (Some(&first), Some(&last)) = (nonzero.first(), nonzero.last()) else {
        return Err(Error::InvalidArgument("output does not depend on the input".into()));
    };
    if first == 0 || last + 1 == input_len {
        return Err(Error::RfClipped {
            rf: last - first + 1,
            input_len,
        });
    }
    Ok(GradientSupport {
        first,
        last,
        count: nonzero.len(),
    })
}

/// Empirical receptive field of one output unit: the extent of its
/// input-gradient support.
pub fn empirical_rf<F>(forward: F, input_len: usize, position: usize) -> Result<usize>
where
    F: FnOnce(&mut Tape<f64>, Var) -> Result<Var>,
{
    gradient_support(forward, input_len, position).map(|s| s.extent())
}

/// Runs a single-channel probe network built from `layers`: unpadded
/// convolutions with constant positive taps, and mean pooling standing in
/// for max pooling so that every window position passes gradient.
pub fn probe_stack(tape: &mut Tape<f64>, x: Var, layers: &[LayerSpec]) -> Result<Var> {
    let mut h = x;
    for (k, layer) in layers.iter().enumerate() {
        layer.validate(k + 1)?;
        h = match layer.kind {
            LayerKind::Conv => {
                let w = tape.constant(Tensor3::filled(1, 1, layer.f, 1.0 / layer.f as f64));
                let b = tape.constant(Tensor3::zeros(1, 1, 1));
                tape.conv1d(h, w, b, ConvGeometry::valid(layer.s, layer.d))?
            }
            LayerKind::Pool => tape.meanpool1d(h, layer.f, layer.s)?,
            LayerKind::Upsample => unreachable!("rejected by validate"),
        };
    }
    Ok(h)
}

/// Empirical receptive field of a layer stack, measured on an input just
/// long enough that output unit 1 sees no boundary.
pub fn empirical_stack_rf(layers: &[LayerSpec]) -> Result<usize> {
    let analytic = receptive_field(layers)?;
    let jump = analytic.entries.last().map_or(1, |e| e.stride_product);
    let input_len = analytic.final_rf() + 2 * jump + 1;
    empirical_rf(|tape, x| probe_stack(tape, x, layers), input_len, 1)
}
