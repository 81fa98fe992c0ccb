//! Raw forward/backward loops on contiguous slices.
//!
//! Every kernel walks its loops in a fixed order, so results are bit-identical
//! between runs. Stride-1 convolutions reduce to `axpy`/`dot` over contiguous
//! rows, which is where nearly all training time goes.

use super::Real;

/// Stride, dilation and zero padding of a 1-D (transposed) convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    pub stride: usize,
    pub dilation: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl ConvGeometry {
    pub fn valid(stride: usize, dilation: usize) -> Self {
        Self {
            stride,
            dilation,
            pad_left: 0,
            pad_right: 0,
        }
    }

    /// Length-preserving padding for a stride-1 kernel of size `f`: the total
    /// `d·(f−1)` is split with the smaller half on the left.
    pub fn same(f: usize, dilation: usize) -> Self {
        let total = dilation * f.saturating_sub(1);
        Self {
            stride: 1,
            dilation,
            pad_left: total / 2,
            pad_right: total - total / 2,
        }
    }

    /// Effective kernel span `d·(f−1)+1`.
    pub fn span(&self, f: usize) -> usize {
        self.dilation * (f - 1) + 1
    }

    /// Input offset of tap `k` relative to `t·stride`.
    fn tap_offset(&self, k: usize) -> isize {
        (k * self.dilation) as isize - self.pad_left as isize
    }
}

/// `floor((L + left + right − d·(f−1) − 1)/s) + 1`, or `None` when the padded
/// input is shorter than one window.
pub fn conv_output_len(len: usize, f: usize, geom: &ConvGeometry) -> Option<usize> {
    if f == 0 || geom.stride == 0 || geom.dilation == 0 {
        return None;
    }
    let padded = len + geom.pad_left + geom.pad_right;
    let span = geom.span(f);
    (padded >= span).then(|| (padded - span) / geom.stride + 1)
}

/// `(L−1)·s + d·(f−1) + 1 − left − right`, or `None` if not positive.
pub fn transposed_output_len(len: usize, f: usize, geom: &ConvGeometry) -> Option<usize> {
    if len == 0 || f == 0 || geom.stride == 0 || geom.dilation == 0 {
        return None;
    }
    let full = (len - 1) * geom.stride + geom.span(f);
    let pad = geom.pad_left + geom.pad_right;
    (full > pad).then(|| full - pad)
}

/// Output positions `t ∈ [lo, hi)` whose tap `t·s + off` lands inside `[0, len)`.
fn tap_range(off: isize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let s = stride as isize;
    let len = len as isize;
    if off >= len {
        return (0, 0);
    }
    let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
    let hi = ((len - off + s - 1) / s).min(out_len as isize);
    let lo = lo.min(hi);
    (lo as usize, hi as usize)
}

/// Positions per cache tile in the stride-1 loops.
const TILE: usize = 1024;

#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + a * xv;
    }
}

/// Dot product with eight independent accumulators so the reduction
/// vectorizes while staying deterministic.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] = acc[j] + x[j] * y[j];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Rows copied into zero-padded storage wide enough for every geometry,
/// so stride-1 taps never need bounds handling.
struct PaddedRows<T> {
    data: Vec<T>,
    left: usize,
    width: usize,
}

impl<T: Real> PaddedRows<T> {
    fn new(x: &[T], rows: usize, len: usize, geoms: &[ConvGeometry]) -> Self {
        let left = geoms.iter().map(|g| g.pad_left).max().unwrap_or(0);
        let right = geoms.iter().map(|g| g.pad_right).max().unwrap_or(0);
        Self::with_margins(x, rows, len, left, right)
    }

    fn with_margins(x: &[T], rows: usize, len: usize, left: usize, right: usize) -> Self {
        let width = left + len + right;
        let mut data = vec![T::zero(); rows * width];
        for r in 0..rows {
            data[r * width + left..r * width + left + len].copy_from_slice(&x[r * len..(r + 1) * len]);
        }
        Self { data, left, width }
    }

    fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.width..(r + 1) * self.width]
    }
}

/// `out[t] += Σ_k w[k]·x[tap(k) + t0 + t]`, taps added in increasing `k` for
/// every element. Taps are fused four at a time to cut load/store traffic.
#[inline]
fn correlate_into<T: Real>(out: &mut [T], x: &[T], w: &[T], t0: usize, tap: impl Fn(usize) -> usize) {
    let n = out.len();
    let mut k = 0;
    while k + 4 <= w.len() {
        let (w0, w1, w2, w3) = (w[k], w[k + 1], w[k + 2], w[k + 3]);
        let x0 = &x[tap(k) + t0..][..n];
        let x1 = &x[tap(k + 1) + t0..][..n];
        let x2 = &x[tap(k + 2) + t0..][..n];
        let x3 = &x[tap(k + 3) + t0..][..n];
        for t in 0..n {
            out[t] = (((out[t] + w0 * x0[t]) + w1 * x1[t]) + w2 * x2[t]) + w3 * x3[t];
        }
        k += 4;
    }
    while k < w.len() {
        axpy(out, w[k], &x[tap(k) + t0..][..n]);
        k += 1;
    }
}

/// `acc[k] += Σ_t g[t]·x[tap(k) + t0 + t]`, several taps per pass over `g`.
#[inline]
fn correlate_dot<T: Real>(acc: &mut [T], g: &[T], x: &[T], t0: usize, tap: impl Fn(usize) -> usize) {
    let n = g.len();
    let mut k = 0;
    while k + 8 <= acc.len() {
        let xs: [&[T]; 8] = std::array::from_fn(|q| &x[tap(k + q) + t0..][..n]);
        let sums = dot_group(g, xs);
        for (q, v) in sums.into_iter().enumerate() {
            acc[k + q] = acc[k + q] + v;
        }
        k += 8;
    }
    while k + 4 <= acc.len() {
        let xs: [&[T]; 4] = std::array::from_fn(|q| &x[tap(k + q) + t0..][..n]);
        let sums = dot_group(g, xs);
        for (q, v) in sums.into_iter().enumerate() {
            acc[k + q] = acc[k + q] + v;
        }
        k += 4;
    }
    while k < acc.len() {
        acc[k] = acc[k] + dot(g, &x[tap(k) + t0..][..n]);
        k += 1;
    }
}

/// `N` dot products of `g` against equally long rows, eight lanes each.
#[inline(always)]
fn dot_group<T: Real, const N: usize>(g: &[T], xs: [&[T]; N]) -> [T; N] {
    let n = g.len();
    let full = n - n % 8;
    let mut lanes = [[T::zero(); 8]; N];
    for c in (0..full).step_by(8) {
        let gc: &[T; 8] = g[c..c + 8].try_into().unwrap();
        for q in 0..N {
            let xc: &[T; 8] = xs[q][c..c + 8].try_into().unwrap();
            for j in 0..8 {
                lanes[q][j] = lanes[q][j] + gc[j] * xc[j];
            }
        }
    }
    std::array::from_fn(|q| {
        let l = &lanes[q];
        let tail = (full..n).fold(T::zero(), |a, t| a + g[t] * xs[q][t]);
        ((l[0] + l[4]) + (l[1] + l[5])) + ((l[2] + l[6]) + (l[3] + l[7])) + tail
    })
}

/// Dimensions shared by the convolution kernels.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub f: usize,
    pub in_len: usize,
    pub out_len: usize,
}

/// `y[b,o,t] = bias[o] + Σ_i Σ_k w[o,i,k]·x[b,i,t·s + k·d − left]`, with a
/// per-output-channel geometry (uniform for plain convolutions).
pub(crate) fn conv_forward<T: Real>(
    x: &[T],
    w: &[T],
    bias: &[T],
    geoms: &[ConvGeometry],
    dims: ConvDims,
) -> Vec<T> {
    let ConvDims {
        batch,
        c_in,
        c_out,
        f,
        in_len,
        out_len,
    } = dims;
    let mut y = vec![T::zero(); batch * c_out * out_len];
    let padded = geoms
        .iter()
        .all(|g| g.stride == 1)
        .then(|| PaddedRows::new(x, batch * c_in, in_len, geoms));
    for b in 0..batch {
        for o in 0..c_out {
            let g = &geoms[o];
            let out = &mut y[(b * c_out + o) * out_len..][..out_len];
            out.fill(bias[o]);
            if let Some(p) = &padded {
                for t0 in (0..out_len).step_by(TILE) {
                    let t1 = (t0 + TILE).min(out_len);
                    for i in 0..c_in {
                        let xr = p.row(b * c_in + i);
                        let wr = &w[(o * c_in + i) * f..][..f];
                        let base = p.left as isize - g.pad_left as isize;
                        let tap = |k: usize| (base + (k * g.dilation) as isize) as usize;
                        correlate_into(&mut out[t0..t1], xr, wr, t0, tap);
                    }
                }
                continue;
            }
            for i in 0..c_in {
                let xr = &x[(b * c_in + i) * in_len..][..in_len];
                let wr = &w[(o * c_in + i) * f..][..f];
                for (k, &wv) in wr.iter().enumerate() {
                    let off = g.tap_offset(k);
                    let (lo, hi) = tap_range(off, g.stride, in_len, out_len);
                    for t in lo..hi {
                        let src = (t as isize * g.stride as isize + off) as usize;
                        out[t] = out[t] + wv * xr[src];
                    }
                }
            }
        }
    }
    y
}

/// Gradients of [`conv_forward`] w.r.t. input, weights and bias, accumulated
/// into the provided buffers (any of which may be skipped).
pub(crate) fn conv_backward<T: Real>(
    x: &[T],
    w: &[T],
    geoms: &[ConvGeometry],
    dims: ConvDims,
    gy: &[T],
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let ConvDims {
        batch,
        c_in,
        c_out,
        f,
        in_len,
        out_len,
    } = dims;
    let gy_row = |b: usize, o: usize| &gy[(b * c_out + o) * out_len..][..out_len];
    if let Some(gb) = gb.as_deref_mut() {
        for b in 0..batch {
            for (o, acc) in gb.iter_mut().enumerate() {
                *acc = *acc + gy_row(b, o).iter().copied().sum::<T>();
            }
        }
    }
    let strided = geoms.iter().any(|g| g.stride != 1);
    if strided {
        for b in 0..batch {
            for o in 0..c_out {
                let g = &geoms[o];
                let gyr = gy_row(b, o);
                for i in 0..c_in {
                    let xoff = (b * c_in + i) * in_len;
                    let woff = (o * c_in + i) * f;
                    for k in 0..f {
                        let off = g.tap_offset(k);
                        let (lo, hi) = tap_range(off, g.stride, in_len, out_len);
                        let mut acc = T::zero();
                        for t in lo..hi {
                            let src = xoff + (t as isize * g.stride as isize + off) as usize;
                            acc = acc + gyr[t] * x[src];
                            if let Some(gx) = gx.as_deref_mut() {
                                gx[src] = gx[src] + w[woff + k] * gyr[t];
                            }
                        }
                        if let Some(gw) = gw.as_deref_mut() {
                            gw[woff + k] = gw[woff + k] + acc;
                        }
                    }
                }
            }
        }
        return;
    }

    if let Some(gx) = gx.as_deref_mut() {
        // gx[j] = Σ_o Σ_k w[o,i,k]·gy[o][j + pad_left − k·d]: a correlation of
        // the zero-padded upstream gradient with each kernel.
        let margin_left = geoms.iter().map(|g| g.dilation * (f - 1)).max().unwrap_or(0);
        let margin_right = geoms.iter().map(|g| g.pad_left).max().unwrap_or(0) + in_len;
        let gp = PaddedRows::with_margins(gy, batch * c_out, out_len, margin_left, margin_right);
        for b in 0..batch {
            for i in 0..c_in {
                let gxr = &mut gx[(b * c_in + i) * in_len..][..in_len];
                for t0 in (0..in_len).step_by(TILE) {
                    let t1 = (t0 + TILE).min(in_len);
                    for o in 0..c_out {
                        let g = &geoms[o];
                        let row = gp.row(b * c_out + o);
                        let wr = &w[(o * c_in + i) * f..][..f];
                        let tap = |k: usize| margin_left + g.pad_left - k * g.dilation;
                        correlate_into(&mut gxr[t0..t1], row, wr, t0, tap);
                    }
                }
            }
        }
    }
    if let Some(gw) = gw.as_deref_mut() {
        let xp = PaddedRows::new(x, batch * c_in, in_len, geoms);
        for b in 0..batch {
            for o in 0..c_out {
                let g = &geoms[o];
                let gyr = gy_row(b, o);
                let base = xp.left - g.pad_left;
                for i in 0..c_in {
                    let xr = xp.row(b * c_in + i);
                    let gwr = &mut gw[(o * c_in + i) * f..][..f];
                    for t0 in (0..out_len).step_by(TILE) {
                        let t1 = (t0 + TILE).min(out_len);
                        let tap = |k: usize| base + k * g.dilation;
                        correlate_dot(gwr, &gyr[t0..t1], xr, t0, tap);
                    }
                }
            }
        }
    }
}

/// `y[b,o,j·s + k·d − left] += w[o,i,k]·x[b,i,j]`, plus bias. Weights are laid
/// out (c_out, c_in, f) like a forward convolution.
pub(crate) fn transposed_forward<T: Real>(
    x: &[T],
    w: &[T],
    bias: &[T],
    geom: &ConvGeometry,
    dims: ConvDims,
) -> Vec<T> {
    let ConvDims {
        batch,
        c_in,
        c_out,
        f,
        in_len,
        out_len,
    } = dims;
    let mut y = vec![T::zero(); batch * c_out * out_len];
    for b in 0..batch {
        for o in 0..c_out {
            let out = &mut y[(b * c_out + o) * out_len..][..out_len];
            out.fill(bias[o]);
            for i in 0..c_in {
                let xr = &x[(b * c_in + i) * in_len..][..in_len];
                for k in 0..f {
                    let wv = w[(o * c_in + i) * f + k];
                    let off = geom.tap_offset(k);
                    let (lo, hi) = scatter_range(off, geom.stride, in_len, out_len);
                    for j in lo..hi {
                        let dst = (j as isize * geom.stride as isize + off) as usize;
                        out[dst] = out[dst] + wv * xr[j];
                    }
                }
            }
        }
    }
    y
}

/// Input positions `j ∈ [lo, hi)` whose target `j·s + off` lands in `[0, out_len)`.
fn scatter_range(off: isize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    tap_range(off, stride, out_len, in_len)
}

pub(crate) fn transposed_backward<T: Real>(
    x: &[T],
    w: &[T],
    geom: &ConvGeometry,
    dims: ConvDims,
    gy: &[T],
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let ConvDims {
        batch,
        c_in,
        c_out,
        f,
        in_len,
        out_len,
    } = dims;
    for b in 0..batch {
        for o in 0..c_out {
            let gyr = &gy[(b * c_out + o) * out_len..][..out_len];
            if let Some(gb) = gb.as_deref_mut() {
                gb[o] = gb[o] + gyr.iter().copied().sum::<T>();
            }
            for i in 0..c_in {
                let xoff = (b * c_in + i) * in_len;
                for k in 0..f {
                    let widx = (o * c_in + i) * f + k;
                    let off = geom.tap_offset(k);
                    let (lo, hi) = scatter_range(off, geom.stride, in_len, out_len);
                    let mut acc = T::zero();
                    for j in lo..hi {
                        let src = (j as isize * geom.stride as isize + off) as usize;
                        acc = acc + gyr[src] * x[xoff + j];
                        if let Some(gx) = gx.as_deref_mut() {
                            gx[xoff + j] = gx[xoff + j] + w[widx] * gyr[src];
                        }
                    }
                    if let Some(gw) = gw.as_deref_mut() {
                        gw[widx] = gw[widx] + acc;
                    }
                }
            }
        }
    }
}

/// Max pooling over every (batch, channel) row. Returns the pooled values and,
/// for each of them, the flat input index of the first maximum in its window.
pub(crate) fn maxpool_forward<T: Real>(
    x: &[T],
    rows: usize,
    in_len: usize,
    window: usize,
    stride: usize,
    out_len: usize,
) -> (Vec<T>, Vec<usize>) {
    let mut y = Vec::with_capacity(rows * out_len);
    let mut arg = Vec::with_capacity(rows * out_len);
    for r in 0..rows {
        let base = r * in_len;
        for t in 0..out_len {
            let start = base + t * stride;
            let mut best = start;
            for idx in start + 1..start + window {
                if x[idx] > x[best] {
                    best = idx;
                }
            }
            y.push(x[best]);
            arg.push(best);
        }
    }
    (y, arg)
}

pub(crate) fn meanpool_forward<T: Real>(
    x: &[T],
    rows: usize,
    in_len: usize,
    window: usize,
    stride: usize,
    out_len: usize,
) -> Vec<T> {
    let scale = T::one() / T::from_usize(window).unwrap_or_else(T::one);
    let mut y = Vec::with_capacity(rows * out_len);
    for r in 0..rows {
        let base = r * in_len;
        for t in 0..out_len {
            let start = base + t * stride;
            let s: T = x[start..start + window].iter().copied().sum();
            y.push(s * scale);
        }
    }
    y
}
