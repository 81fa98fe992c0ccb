use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{self, ConvDims, ConvGeometry};
use super::{Real, Tensor3};
use crate::error::{shape_err, Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv {
        x: usize,
        w: usize,
        b: usize,
        geoms: Vec<ConvGeometry>,
        dims: ConvDims,
    },
    Transposed {
        x: usize,
        w: usize,
        b: usize,
        geom: ConvGeometry,
        dims: ConvDims,
    },
    MaxPool {
        x: usize,
        argmax: Vec<usize>,
    },
    MeanPool {
        x: usize,
        window: usize,
        stride: usize,
    },
    Concat {
        a: usize,
        b: usize,
    },
    LeakyRelu {
        x: usize,
        slope: T,
    },
    L1 {
        pred: usize,
        target: usize,
        valid: Vec<usize>,
        count: usize,
    },
    Dot {
        x: usize,
        coeffs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor3<T>,
    grad: Option<Tensor3<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Computation record. Nodes are appended in evaluation order, which is
/// therefore a topological order; backward walks it in reverse.
#[derive(Debug)]
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor3<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor3<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor3<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor3<T> {
        &self.nodes[self.check(v).expect("var from another tape")].value
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor3<T>> {
        self.check(v).ok().and_then(|i| self.nodes[i].grad.as_ref())
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.check(v)
            .map(|i| self.nodes[i].requires_grad)
            .unwrap_or(false)
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::InvalidArgument(
                "variable does not belong to this tape".into(),
            ));
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor3<T>, requires_grad: bool, op: Op<T>) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    fn any_grad(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Strided, dilated, zero-padded 1-D convolution. `w` has shape
    /// (c_out, c_in, f) and `b` holds `c_out` values.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeometry) -> Result<Var> {
        let c_out = self.value(w).batch();
        self.conv1d_per_channel(x, w, b, vec![geom; c_out])
    }

    /// Convolution where output channel `o` uses its own geometry
    /// `geoms[o]`. All geometries must produce the same output length.
    pub fn conv1d_per_channel(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        geoms: Vec<ConvGeometry>,
    ) -> Result<Var> {
        let (xi, wi, bi) = (self.check(x)?, self.check(w)?, self.check(b)?);
        if xi == wi || xi == bi || wi == bi {
            return Err(Error::InvalidArgument(
                "conv1d input, weights and bias must be distinct nodes".into(),
            ));
        }
        let (batch, c_in, in_len) = self.nodes[xi].value.shape();
        let (c_out, w_in, f) = self.nodes[wi].value.shape();
        if w_in != c_in {
            return shape_err(format!(
                "conv1d expects {w_in} input channels, got {c_in}"
            ));
        }
        if self.nodes[bi].value.numel() != c_out {
            return shape_err(format!(
                "conv1d bias has {} values for {c_out} output channels",
                self.nodes[bi].value.numel()
            ));
        }
        if geoms.len() != c_out {
            return shape_err("one geometry per output channel is required".to_string());
        }
        let mut out_len = None;
        for g in &geoms {
            let l = kernels::conv_output_len(in_len, f, g).ok_or_else(|| {
                Error::Shape(format!(
                    "padded length {} is shorter than the kernel span {}",
                    in_len + g.pad_left + g.pad_right,
                    g.dilation.max(1) * f.saturating_sub(1) + 1
                ))
            })?;
            match out_len {
                Some(prev) if prev != l => {
                    return shape_err("per-channel geometries disagree on output length");
                }
                _ => out_len = Some(l),
            }
        }
        let out_len = out_len.unwrap_or(0);
        let dims = ConvDims {
            batch,
            c_in,
            c_out,
            f,
            in_len,
            out_len,
        };
        let data = kernels::conv_forward(
            self.nodes[xi].value.data(),
            self.nodes[wi].value.data(),
            self.nodes[bi].value.data(),
            &geoms,
            dims,
        );
        let value = Tensor3::from_vec(batch, c_out, out_len, data)?;
        let rg = self.any_grad(&[xi, wi, bi]);
        Ok(self.push(
            value,
            rg,
            Op::Conv {
                x: xi,
                w: wi,
                b: bi,
                geoms,
                dims,
            },
        ))
    }

    /// Transposed convolution, the adjoint of [`Tape::conv1d`] with the
    /// weight's channel axes swapped. `w` has shape (c_out, c_in, f).
    pub fn transposed_conv1d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeometry) -> Result<Var> {
        let (xi, wi, bi) = (self.check(x)?, self.check(w)?, self.check(b)?);
        if xi == wi || xi == bi || wi == bi {
            return Err(Error::InvalidArgument(
                "transposed_conv1d input, weights and bias must be distinct nodes".into(),
            ));
        }
        let (batch, c_in, in_len) = self.nodes[xi].value.shape();
        let (c_out, w_in, f) = self.nodes[wi].value.shape();
        if w_in != c_in {
            return shape_err(format!(
                "transposed_conv1d expects {w_in} input channels, got {c_in}"
            ));
        }
        if self.nodes[bi].value.numel() != c_out {
            return shape_err("transposed_conv1d bias length differs from c_out");
        }
        let out_len = kernels::transposed_output_len(in_len, f, &geom)
            .ok_or_else(|| Error::Shape("transposed_conv1d output would be empty".into()))?;
        let dims = ConvDims {
            batch,
            c_in,
            c_out,
            f,
            in_len,
            out_len,
        };
        let data = kernels::transposed_forward(
            self.nodes[xi].value.data(),
            self.nodes[wi].value.data(),
            self.nodes[bi].value.data(),
            &geom,
            dims,
        );
        let value = Tensor3::from_vec(batch, c_out, out_len, data)?;
        let rg = self.any_grad(&[xi, wi, bi]);
        Ok(self.push(
            value,
            rg,
            Op::Transposed {
                x: xi,
                w: wi,
                b: bi,
                geom,
                dims,
            },
        ))
    }

    fn pool_shape(&self, xi: usize, window: usize, stride: usize) -> Result<(usize, usize, usize, usize)> {
        let (batch, ch, len) = self.nodes[xi].value.shape();
        if window == 0 || stride == 0 {
            return Err(Error::InvalidArgument("pool window and stride must be positive".into()));
        }
        if len < window {
            return shape_err(format!("pool window {window} exceeds length {len}"));
        }
        Ok((batch, ch, len, (len - window) / stride + 1))
    }

    /// Max pooling; the gradient goes to the first maximum of each window.
    pub fn maxpool1d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let xi = self.check(x)?;
        let (batch, ch, len, out_len) = self.pool_shape(xi, window, stride)?;
        let (data, argmax) = kernels::maxpool_forward(
            self.nodes[xi].value.data(),
            batch * ch,
            len,
            window,
            stride,
            out_len,
        );
        let value = Tensor3::from_vec(batch, ch, out_len, data)?;
        let rg = self.any_grad(&[xi]);
        Ok(self.push(value, rg, Op::MaxPool { x: xi, argmax }))
    }

    /// Mean pooling. Not used by the networks; it spreads gradient over the
    /// whole window, which makes it the probe of choice for receptive fields.
    pub fn meanpool1d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let xi = self.check(x)?;
        let (batch, ch, len, out_len) = self.pool_shape(xi, window, stride)?;
        let data = kernels::meanpool_forward(
            self.nodes[xi].value.data(),
            batch * ch,
            len,
            window,
            stride,
            out_len,
        );
        let value = Tensor3::from_vec(batch, ch, out_len, data)?;
        let rg = self.any_grad(&[xi]);
        Ok(self.push(value, rg, Op::MeanPool { x: xi, window, stride }))
    }

    /// Stacks `b`'s channels after `a`'s.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (ab, ac, al) = self.nodes[ai].value.shape();
        let (bb, bc, bl) = self.nodes[bi].value.shape();
        if ab != bb || al != bl {
            return shape_err(format!(
                "concat needs equal batch and length, got ({ab}, {al}) and ({bb}, {bl})"
            ));
        }
        let mut data = Vec::with_capacity(ab * (ac + bc) * al);
        for n in 0..ab {
            let av = self.nodes[ai].value.data();
            let bv = self.nodes[bi].value.data();
            data.extend_from_slice(&av[n * ac * al..(n + 1) * ac * al]);
            data.extend_from_slice(&bv[n * bc * al..(n + 1) * bc * al]);
        }
        let value = Tensor3::from_vec(ab, ac + bc, al, data)?;
        let rg = self.any_grad(&[ai, bi]);
        Ok(self.push(value, rg, Op::Concat { a: ai, b: bi }))
    }

    /// Elementwise `max(x, slope·x)` for `slope ∈ [0, 1]`.
    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        let xi = self.check(x)?;
        if !(slope >= T::zero() && slope <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "leaky slope must lie in [0, 1], got {slope:?}"
            )));
        }
        let src = &self.nodes[xi].value;
        let data = src
            .data()
            .iter()
            .map(|&v| if v >= T::zero() { v } else { slope * v })
            .collect();
        let (b, c, l) = src.shape();
        let value = Tensor3::from_vec(b, c, l, data)?;
        let rg = self.any_grad(&[xi]);
        Ok(self.push(value, rg, Op::LeakyRelu { x: xi, slope }))
    }

    /// Mean absolute error over all elements.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let pi = self.check(pred)?;
        let (b, _, l) = self.nodes[pi].value.shape();
        self.l1_loss_masked(pred, target, &vec![l; b])
    }

    /// Mean absolute error restricted to the first `valid[n]` positions of
    /// every row of batch item `n`.
    pub fn l1_loss_masked(&mut self, pred: Var, target: Var, valid: &[usize]) -> Result<Var> {
        let (pi, ti) = (self.check(pred)?, self.check(target)?);
        let (pb, pc, pl) = self.nodes[pi].value.shape();
        if self.nodes[ti].value.shape() != (pb, pc, pl) {
            return shape_err(format!(
                "l1 loss shapes differ: {:?} vs {:?}",
                self.nodes[pi].value.shape(),
                self.nodes[ti].value.shape()
            ));
        }
        if valid.len() != pb || valid.iter().any(|&v| v > pl) {
            return shape_err("l1 mask needs one valid length per batch item, at most the row length");
        }
        let count: usize = valid.iter().map(|&v| v * pc).sum();
        if count == 0 {
            return Err(Error::InvalidArgument("l1 mask selects no samples".into()));
        }
        let (p, t) = (&self.nodes[pi].value, &self.nodes[ti].value);
        let mut total = 0.0f64;
        for n in 0..pb {
            for c in 0..pc {
                let (pr, tr) = (p.row(n, c), t.row(n, c));
                for j in 0..valid[n] {
                    total += (pr[j] - tr[j]).abs().to_f64().unwrap_or(f64::NAN);
                }
            }
        }
        let value = Tensor3::from_vec(1, 1, 1, vec![T::from_f64_lossy(total / count as f64)])?;
        let rg = self.any_grad(&[pi, ti]);
        Ok(self.push(
            value,
            rg,
            Op::L1 {
                pred: pi,
                target: ti,
                valid: valid.to_vec(),
                count,
            },
        ))
    }

    /// Scalar `Σ x·coeffs` with constant coefficients.
    pub fn dot_const(&mut self, x: Var, coeffs: Vec<T>) -> Result<Var> {
        let xi = self.check(x)?;
        if coeffs.len() != self.nodes[xi].value.numel() {
            return shape_err("dot_const coefficient count differs from tensor size");
        }
        let total: f64 = self.nodes[xi]
            .value
            .data()
            .iter()
            .zip(&coeffs)
            .map(|(&a, &c)| (a * c).to_f64().unwrap_or(f64::NAN))
            .sum();
        let value = Tensor3::from_vec(1, 1, 1, vec![T::from_f64_lossy(total)])?;
        let rg = self.any_grad(&[xi]);
        Ok(self.push(value, rg, Op::Dot { x: xi, coeffs }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        self.dot_const(x, vec![T::one(); n])
    }

    /// Scalar holding the single element `x[b, c, t]`.
    pub fn pick(&mut self, x: Var, b: usize, c: usize, t: usize) -> Result<Var> {
        let (nb, nc, nl) = self.value(x).shape();
        if b >= nb || c >= nc || t >= nl {
            return shape_err(format!("index ({b}, {c}, {t}) outside ({nb}, {nc}, {nl})"));
        }
        let mut coeffs = vec![T::zero(); nb * nc * nl];
        coeffs[(b * nc + c) * nl + t] = T::one();
        self.dot_const(x, coeffs)
    }

    /// Reverse pass from the scalar `loss`. Gradients are added to whatever
    /// the leaves already hold, so two calls without [`Tape::zero_grad`]
    /// double them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let li = self.check(loss).map_err(|_| Error::Detached)?;
        if !self.nodes[li].requires_grad {
            return Err(Error::Detached);
        }
        if self.nodes[li].value.numel() != 1 {
            return shape_err("backward needs a scalar loss");
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=li).map(|_| None).collect();
        grads[li] = Some(vec![T::one()]);
        for idx in (0..=li).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[idx].op {
                grads[idx] = Some(gy);
                continue;
            }
            self.propagate(idx, &gy, &mut grads);
        }
        for (idx, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            let node = &mut self.nodes[idx];
            let (b, c, l) = node.value.shape();
            match &mut node.grad {
                Some(acc) => {
                    for (a, v) in acc.data_mut().iter_mut().zip(g) {
                        *a = *a + v;
                    }
                }
                None => node.grad = Some(Tensor3::from_vec(b, c, l, g)?),
            }
        }
        Ok(())
    }

    fn wants(&self, idx: usize) -> bool {
        self.nodes[idx].requires_grad
    }

    fn propagate(&self, idx: usize, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let zeros = |n: usize| vec![T::zero(); n];
        let take = |grads: &mut [Option<Vec<T>>], i: usize| -> Vec<T> {
            grads[i]
                .take()
                .unwrap_or_else(|| zeros(self.nodes[i].value.numel()))
        };
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Conv {
                x,
                w,
                b,
                geoms,
                dims,
            } => {
                let (x, w, b) = (*x, *w, *b);
                let mut gx = self.wants(x).then(|| take(grads, x));
                let mut gw = self.wants(w).then(|| take(grads, w));
                let mut gb = self.wants(b).then(|| take(grads, b));
                kernels::conv_backward(
                    self.nodes[x].value.data(),
                    self.nodes[w].value.data(),
                    geoms,
                    *dims,
                    gy,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                put_back(grads, x, gx);
                put_back(grads, w, gw);
                put_back(grads, b, gb);
            }
            Op::Transposed {
                x,
                w,
                b,
                geom,
                dims,
            } => {
                let (x, w, b) = (*x, *w, *b);
                let mut gx = self.wants(x).then(|| take(grads, x));
                let mut gw = self.wants(w).then(|| take(grads, w));
                let mut gb = self.wants(b).then(|| take(grads, b));
                kernels::transposed_backward(
                    self.nodes[x].value.data(),
                    self.nodes[w].value.data(),
                    geom,
                    *dims,
                    gy,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                put_back(grads, x, gx);
                put_back(grads, w, gw);
                put_back(grads, b, gb);
            }
            Op::MaxPool { x, argmax } => {
                if self.wants(*x) {
                    let mut gx = take(grads, *x);
                    for (&src, &g) in argmax.iter().zip(gy) {
                        gx[src] = gx[src] + g;
                    }
                    grads[*x] = Some(gx);
                }
            }
            Op::MeanPool { x, window, stride } => {
                if self.wants(*x) {
                    let (batch, ch, len) = self.nodes[*x].value.shape();
                    let out_len = self.nodes[idx].value.len();
                    let scale = T::one() / T::from_usize(*window).unwrap_or_else(T::one);
                    let mut gx = take(grads, *x);
                    for r in 0..batch * ch {
                        for t in 0..out_len {
                            let g = gy[r * out_len + t] * scale;
                            let start = r * len + t * stride;
                            for v in &mut gx[start..start + window] {
                                *v = *v + g;
                            }
                        }
                    }
                    grads[*x] = Some(gx);
                }
            }
            Op::Concat { a, b } => {
                let (batch, _, len) = self.nodes[idx].value.shape();
                let ac = self.nodes[*a].value.channels();
                let bc = self.nodes[*b].value.channels();
                let cc = ac + bc;
                for (src, ch, first) in [(*a, ac, 0), (*b, bc, ac)] {
                    if !self.wants(src) {
                        continue;
                    }
                    let mut gs = take(grads, src);
                    for n in 0..batch {
                        let from = &gy[(n * cc + first) * len..(n * cc + first + ch) * len];
                        let to = &mut gs[n * ch * len..(n + 1) * ch * len];
                        for (t, &f) in to.iter_mut().zip(from) {
                            *t = *t + f;
                        }
                    }
                    grads[src] = Some(gs);
                }
            }
            Op::LeakyRelu { x, slope } => {
                if self.wants(*x) {
                    let mut gx = take(grads, *x);
                    for ((g, &v), &up) in gx.iter_mut().zip(self.nodes[*x].value.data()).zip(gy) {
                        let d = if v >= T::zero() { up } else { *slope * up };
                        *g = *g + d;
                    }
                    grads[*x] = Some(gx);
                }
            }
            Op::L1 {
                pred,
                target,
                valid,
                count,
            } => {
                let (pb, pc, pl) = self.nodes[*pred].value.shape();
                let scale = gy[0] / T::from_usize(*count).unwrap_or_else(T::one);
                let p = self.nodes[*pred].value.data();
                let t = self.nodes[*target].value.data();
                let mut d = vec![T::zero(); p.len()];
                for n in 0..pb {
                    for c in 0..pc {
                        let base = (n * pc + c) * pl;
                        for j in 0..valid[n] {
                            let diff = p[base + j] - t[base + j];
                            d[base + j] = if diff > T::zero() {
                                scale
                            } else if diff < T::zero() {
                                -scale
                            } else {
                                T::zero()
                            };
                        }
                    }
                }
                for (src, sign) in [(*pred, T::one()), (*target, -T::one())] {
                    if !self.wants(src) {
                        continue;
                    }
                    let mut gs = take(grads, src);
                    for (g, &v) in gs.iter_mut().zip(&d) {
                        *g = *g + sign * v;
                    }
                    grads[src] = Some(gs);
                }
            }
            Op::Dot { x, coeffs } => {
                if self.wants(*x) {
                    let mut gx = take(grads, *x);
                    for (g, &c) in gx.iter_mut().zip(coeffs) {
                        *g = *g + c * gy[0];
                    }
                    grads[*x] = Some(gx);
                }
            }
        }
    }
}

fn put_back<T>(grads: &mut [Option<Vec<T>>], i: usize, g: Option<Vec<T>>) {
    if g.is_some() {
        grads[i] = g;
    }
}
