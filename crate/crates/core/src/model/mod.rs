//! The baseline 1-D U-Net and its ASPP variants.
//!
//! The encoder has one block per entry of `widths`, each two same-padded
//! convolutions; every block but the last (the bottleneck) is followed by a
//! window-2 max pool. The decoder mirrors it with a stride-2 transposed
//! convolution, a skip concatenation and two convolutions per level, and a
//! head of one convolution plus a 1×1 linear projection to a single channel.

mod aspp;
mod checkpoint;

pub use aspp::{aspp_forward, AsppLayerSpec, DEFAULT_FACTORS};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{normalize, AudioBuffer, NormMeta};
use crate::error::{shape_err, Error, Result};
use crate::kv::{join, KvDoc};
use crate::rf::LayerSpec;
use crate::tensor::{ConvGeometry, Real, Tape, Tensor3, Var};

/// Where ASPP layers replace plain convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    AsppMiddle,
    AsppEnd,
    AsppMiddleEnd,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Baseline,
        Variant::AsppMiddle,
        Variant::AsppEnd,
        Variant::AsppMiddleEnd,
    ];

    /// Row label used in reports.
    pub fn display_name(&self) -> &'static str {
        match self {
            Variant::Baseline => "Speech-U-Net",
            Variant::AsppMiddle => "ASPP-middle",
            Variant::AsppEnd => "ASPP-end",
            Variant::AsppMiddleEnd => "ASPP-middle+end",
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::AsppMiddle => "aspp-middle",
            Variant::AsppEnd => "aspp-end",
            Variant::AsppMiddleEnd => "aspp-middle+end",
        }
    }

    /// Both bottleneck convolutions become ASPP layers.
    pub fn aspp_middle(&self) -> bool {
        matches!(self, Variant::AsppMiddle | Variant::AsppMiddleEnd)
    }

    /// The first of the two final convolutions becomes an ASPP layer.
    pub fn aspp_end(&self) -> bool {
        matches!(self, Variant::AsppEnd | Variant::AsppMiddleEnd)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.key() == norm || v.display_name().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UNetConfig {
    pub variant: Variant,
    /// Encoder channel width per block; the last entry is the bottleneck.
    pub widths: Vec<usize>,
    /// Kernel size of every convolution except the output projection.
    pub filter: usize,
    pub factors: Vec<usize>,
    pub slope: f64,
    pub sample_rate: u32,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Baseline,
            widths: vec![16, 32, 64, 128, 256, 256],
            filter: 30,
            factors: DEFAULT_FACTORS.to_vec(),
            slope: 0.2,
            sample_rate: 16_000,
        }
    }
}

impl UNetConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_widths(mut self, widths: &[usize]) -> Self {
        self.widths = widths.to_vec();
        self
    }

    pub fn blocks(&self) -> usize {
        self.widths.len()
    }

    pub fn pools(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    /// Input lengths must be a multiple of this.
    pub fn length_multiple(&self) -> usize {
        1 << self.pools()
    }

    pub fn bottleneck_width(&self) -> usize {
        self.widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Config("need at least two encoder blocks".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.filter == 0 {
            return Err(Error::Config("filter size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.slope) {
            return Err(Error::Config(format!("leaky slope {} outside [0, 1]", self.slope)));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if self.factors.is_empty() || self.factors.contains(&0) {
            return Err(Error::Config("dilation factors must be positive".into()));
        }
        let n = self.factors.len();
        if self.variant.aspp_middle() && self.bottleneck_width() % n != 0 {
            return Err(Error::Config(format!(
                "bottleneck width {} is not divisible by {n} for {}",
                self.bottleneck_width(),
                self.variant
            )));
        }
        if self.variant.aspp_end() && self.widths[0] % n != 0 {
            return Err(Error::Config(format!(
                "output block width {} is not divisible by {n} for {}",
                self.widths[0], self.variant
            )));
        }
        Ok(())
    }

    /// Encoding path as receptive-field layers, bottleneck dilations included.
    pub fn encoder_layers(&self) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        let max_d = self.factors.iter().copied().max().unwrap_or(1);
        for block in 0..self.blocks() {
            let last = block + 1 == self.blocks();
            let d = if last && self.variant.aspp_middle() { max_d } else { 1 };
            layers.push(LayerSpec::conv(self.filter, 1, d));
            layers.push(LayerSpec::conv(self.filter, 1, d));
            if !last {
                layers.push(LayerSpec::pool(2, 2));
            }
        }
        layers
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("variant", self.variant);
        doc.set("widths", join(&self.widths));
        doc.set("filter", self.filter);
        doc.set("factors", join(&self.factors));
        doc.set("slope", self.slope);
        doc.set("sample_rate", self.sample_rate);
        doc
    }

    /// Reads the model keys of `doc`, keeping defaults for absent ones.
    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(v) = doc.get("variant") {
            cfg.variant = v.parse()?;
        }
        if let Some(w) = doc.parse_list("widths")? {
            cfg.widths = w;
        }
        if let Some(f) = doc.parse_value("filter")? {
            cfg.filter = f;
        }
        if let Some(f) = doc.parse_list("factors")? {
            cfg.factors = f;
        }
        if let Some(s) = doc.parse_value("slope")? {
            cfg.slope = s;
        }
        if let Some(r) = doc.parse_value("sample_rate")? {
            cfg.sample_rate = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv,
    Aspp(AsppLayerSpec),
    Upsample,
}

/// One parameterised layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDef {
    pub name: String,
    pub kind: LayerKind,
    pub c_in: usize,
    pub c_out: usize,
    pub f: usize,
    /// Leaky activation after the layer.
    pub activate: bool,
    weight: usize,
    bias: usize,
}

impl LayerDef {
    pub fn param_count(&self) -> usize {
        self.c_out * self.c_in * self.f + self.c_out
    }

    fn describe(&self) -> String {
        let kind = match &self.kind {
            LayerKind::Conv => "conv".to_string(),
            LayerKind::Aspp(s) => format!("aspp[{}]", join(&s.factors)),
            LayerKind::Upsample => "upsample".to_string(),
        };
        format!("{kind} {}->{} f={}", self.c_in, self.c_out, self.f)
    }
}

/// Named trainable array in (c_out, c_in, f) layout; biases are (1, 1, c_out).
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: (usize, usize, usize),
    pub data: Vec<f32>,
}

impl Param {
    pub fn tensor<T: Real>(&self) -> Tensor3<T> {
        let (a, b, c) = self.shape;
        let data = self.data.iter().map(|&v| T::from_f32(v).unwrap_or_else(T::nan)).collect();
        Tensor3::from_vec(a, b, c, data).expect("param shape is consistent")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRow {
    pub name: String,
    pub description: String,
    pub params: usize,
}

/// Per-layer parameter breakdown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Audit {
    pub rows: Vec<AuditRow>,
}

impl Audit {
    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.params).sum()
    }

    /// Layers whose description or parameter count differ, by name.
    pub fn diff(&self, other: &Audit) -> Vec<String> {
        let mut names = Vec::new();
        for row in &self.rows {
            match other.rows.iter().find(|r| r.name == row.name) {
                Some(o) if o == row => {}
                _ => names.push(row.name.clone()),
            }
        }
        for row in &other.rows {
            if !self.rows.iter().any(|r| r.name == row.name) {
                names.push(row.name.clone());
            }
        }
        names
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!("{:<14} {:<28} {:>10}\n", r.name, r.description, r.params));
        }
        out.push_str(&format!("{:<14} {:<28} {:>10}\n", "total", "", self.total()));
        out
    }
}

/// How the encoder pools; [`PoolMode::Mean`] exists for receptive-field probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: UNetConfig,
    layers: Vec<LayerDef>,
    params: Vec<Param>,
}

/// Builds the network for `cfg` with weights drawn uniformly from
/// `±√(1/(c_in·f))` under `seed`. Biases start at zero except the output
/// projection, which starts at the normalized-signal midpoint 0.5.
pub fn build_model(cfg: &UNetConfig, seed: u64) -> Result<Model> {
    cfg.validate()?;
    let mut b = Builder {
        layers: Vec::new(),
        params: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let w = &cfg.widths;
    let n = w.len();
    let aspp = |c_in: usize, c_out: usize| {
        AsppLayerSpec::new(c_in, c_out, cfg.filter, cfg.factors.clone()).map(LayerKind::Aspp)
    };

    let mut c = 1;
    for block in 0..n {
        let kind = |c_in| {
            if block + 1 == n && cfg.variant.aspp_middle() {
                aspp(c_in, w[block])
            } else {
                Ok(LayerKind::Conv)
            }
        };
        b.add(format!("enc{}.conv1", block + 1), kind(c)?, c, w[block], cfg.filter, true);
        b.add(format!("enc{}.conv2", block + 1), kind(w[block])?, w[block], w[block], cfg.filter, true);
        c = w[block];
    }
    for level in (0..n - 1).rev() {
        let name = format!("dec{}", level + 1);
        b.add(format!("{name}.up"), LayerKind::Upsample, c, w[level], 2, false);
        b.add(format!("{name}.conv1"), LayerKind::Conv, 2 * w[level], w[level], cfg.filter, true);
        b.add(format!("{name}.conv2"), LayerKind::Conv, w[level], w[level], cfg.filter, true);
        c = w[level];
    }
    let head_kind = if cfg.variant.aspp_end() {
        aspp(c, w[0])?
    } else {
        LayerKind::Conv
    };
    b.add("head.conv".into(), head_kind, c, w[0], cfg.filter, true);
    b.add("head.out".into(), LayerKind::Conv, w[0], 1, 1, false);
    let out_bias = b.layers.last().map(|l| l.bias).unwrap_or(0);
    b.params[out_bias].data[0] = 0.5;

    Ok(Model {
        config: cfg.clone(),
        layers: b.layers,
        params: b.params,
    })
}

struct Builder {
    layers: Vec<LayerDef>,
    params: Vec<Param>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn add(&mut self, name: String, kind: LayerKind, c_in: usize, c_out: usize, f: usize, activate: bool) {
        let bound = (1.0 / (c_in * f) as f64).sqrt() as f32;
        let weights = (0..c_out * c_in * f)
            .map(|_| self.rng.gen_range(-bound..=bound))
            .collect();
        self.params.push(Param {
            name: format!("{name}.weight"),
            shape: (c_out, c_in, f),
            data: weights,
        });
        self.params.push(Param {
            name: format!("{name}.bias"),
            shape: (1, 1, c_out),
            data: vec![0.0; c_out],
        });
        let weight = self.params.len() - 2;
        self.layers.push(LayerDef {
            name,
            kind,
            c_in,
            c_out,
            f,
            activate,
            weight,
            bias: weight + 1,
        });
    }
}

impl Model {
    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerDef] {
        &self.layers
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    /// Replaces every parameter array; names and shapes must match.
    pub fn load_params(&mut self, params: Vec<Param>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                self.params.len(),
                params.len()
            )));
        }
        for (mine, theirs) in self.params.iter().zip(&params) {
            if mine.name != theirs.name || mine.shape != theirs.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    theirs.name, theirs.shape, mine.name, mine.shape
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn audit(&self) -> Audit {
        Audit {
            rows: self
                .layers
                .iter()
                .map(|l| AuditRow {
                    name: l.name.clone(),
                    description: l.describe(),
                    params: l.param_count(),
                })
                .collect(),
        }
    }

    /// Pushes every parameter onto `tape` as a trainable leaf.
    pub fn bind<T: Real>(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.tensor())).collect()
    }

    /// Pushes every parameter as a constant.
    pub fn bind_frozen<T: Real>(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.tensor())).collect()
    }

    fn apply<T: Real>(&self, tape: &mut Tape<T>, layer: &LayerDef, x: Var, pv: &[Var]) -> Result<Var> {
        let (w, b) = (pv[layer.weight], pv[layer.bias]);
        let y = match &layer.kind {
            LayerKind::Conv => tape.conv1d(x, w, b, ConvGeometry::same(layer.f, 1))?,
            LayerKind::Aspp(spec) => aspp_forward(tape, x, w, b, spec)?,
            LayerKind::Upsample => tape.transposed_conv1d(x, w, b, ConvGeometry::valid(2, 1))?,
        };
        if layer.activate {
            tape.leaky_relu(y, T::from_f64_lossy(self.config.slope))
        } else {
            Ok(y)
        }
    }

    fn check_input<T: Real>(&self, tape: &Tape<T>, x: Var) -> Result<()> {
        let (_, c, l) = tape.value(x).shape();
        if c != 1 {
            return shape_err(format!("model input must have 1 channel, got {c}"));
        }
        let m = self.config.length_multiple();
        if l % m != 0 {
            return shape_err(format!("input length {l} is not a multiple of {m}"));
        }
        Ok(())
    }

    /// Encoding path only; returns the bottleneck activation.
    pub fn encode<T: Real>(&self, tape: &mut Tape<T>, x: Var, pv: &[Var], pool: PoolMode) -> Result<Var> {
        self.check_input(tape, x)?;
        self.encode_with_skips(tape, x, pv, pool).map(|(h, _)| h)
    }

    fn encode_with_skips<T: Real>(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        pv: &[Var],
        pool: PoolMode,
    ) -> Result<(Var, Vec<Var>)> {
        let n = self.config.blocks();
        let mut h = x;
        let mut skips = Vec::with_capacity(n - 1);
        for block in 0..n {
            h = self.apply(tape, &self.layers[2 * block], h, pv)?;
            h = self.apply(tape, &self.layers[2 * block + 1], h, pv)?;
            if block + 1 < n {
                skips.push(h);
                h = match pool {
                    PoolMode::Max => tape.maxpool1d(h, 2, 2)?,
                    PoolMode::Mean => tape.meanpool1d(h, 2, 2)?,
                };
            }
        }
        Ok((h, skips))
    }

    /// Full network on a (batch, 1, L) input, L a multiple of
    /// [`UNetConfig::length_multiple`]. `pv` comes from [`Model::bind`].
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var, pv: &[Var]) -> Result<Var> {
        self.check_input(tape, x)?;
        let n = self.config.blocks();
        let (mut h, skips) = self.encode_with_skips(tape, x, pv, PoolMode::Max)?;
        let mut li = 2 * n;
        for level in (0..n - 1).rev() {
            let up = self.apply(tape, &self.layers[li], h, pv)?;
            h = tape.concat_channels(skips[level], up)?;
            h = self.apply(tape, &self.layers[li + 1], h, pv)?;
            h = self.apply(tape, &self.layers[li + 2], h, pv)?;
            li += 3;
        }
        h = self.apply(tape, &self.layers[li], h, pv)?;
        self.apply(tape, &self.layers[li + 1], h, pv)
    }

    /// Forward pass without gradient bookkeeping on parameters.
    pub fn infer(&self, batch: &Tensor3<f32>) -> Result<Tensor3<f32>> {
        let mut tape = Tape::new();
        let pv = self.bind_frozen(&mut tape);
        let x = tape.constant(batch.clone());
        let y = self.forward(&mut tape, x, &pv)?;
        Ok(tape.value(y).clone())
    }

    /// Enhances a whole utterance in one pass.
    ///
    /// The waveform is normalized with `meta` (or with its own peak when
    /// `None`), padded with silence to a multiple of the pool factor, run
    /// through the network, clamped to `[0, 1]`, cropped and mapped back.
    pub fn enhance(&self, input: &AudioBuffer, meta: Option<NormMeta>) -> Result<AudioBuffer> {
        if input.sample_rate != self.config.sample_rate {
            return Err(Error::SampleRate {
                expected: self.config.sample_rate,
                actual: input.sample_rate,
            });
        }
        if input.samples.is_empty() {
            return Ok(input.clone());
        }
        let meta = meta.unwrap_or_else(|| normalize(&input.samples).1);
        let len = input.samples.len();
        let m = self.config.length_multiple();
        let padded_len = len.div_ceil(m) * m;
        let mut x: Vec<f32> = input.samples.iter().map(|&v| meta.apply(v) as f32).collect();
        x.resize(padded_len, meta.apply(0.0) as f32);
        let y = self.infer(&Tensor3::from_vec(1, 1, padded_len, x)?)?;
        let samples = y.data()[..len]
            .iter()
            .map(|&v| meta.invert(f64::from(v.clamp(0.0, 1.0))))
            .collect();
        Ok(AudioBuffer::new(input.sample_rate, samples))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(variant: Variant) -> UNetConfig {
        UNetConfig {
            variant,
            widths: vec![4, 4, 8],
            filter: 5,
            ..UNetConfig::default()
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.key().parse::<Variant>().unwrap(), v);
            assert_eq!(v.display_name().parse::<Variant>().unwrap(), v);
        }
        assert!("aspp-start".parse::<Variant>().is_err());
    }

    #[test]
    fn config_round_trips_through_kv() {
        let cfg = small(Variant::AsppMiddleEnd);
        assert_eq!(UNetConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn rejects_indivisible_widths() {
        let cfg = small(Variant::AsppMiddle).with_widths(&[4, 4, 6]);
        assert!(build_model(&cfg, 0).is_err());
        let cfg = small(Variant::AsppEnd).with_widths(&[6, 4, 8]);
        assert!(build_model(&cfg, 0).is_err());
        let cfg = small(Variant::Baseline).with_widths(&[6, 5, 7]);
        assert!(build_model(&cfg, 0).is_ok());
    }

    #[test]
    fn single_conv_param_count() {
        let l = LayerDef {
            name: "x".into(),
            kind: LayerKind::Conv,
            c_in: 1,
            c_out: 4,
            f: 3,
            activate: true,
            weight: 0,
            bias: 1,
        };
        assert_eq!(l.param_count(), 16);
    }

    #[test]
    fn forward_rejects_bad_lengths() {
        let m = build_model(&small(Variant::Baseline), 1).unwrap();
        assert!(m.infer(&Tensor3::zeros(1, 1, 30)).is_err());
        assert_eq!(m.infer(&Tensor3::zeros(2, 1, 32)).unwrap().shape(), (2, 1, 32));
    }

    #[test]
    fn same_seed_same_weights() {
        let a = build_model(&small(Variant::AsppEnd), 9).unwrap();
        let b = build_model(&small(Variant::AsppEnd), 9).unwrap();
        let c = build_model(&small(Variant::AsppEnd), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
