#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sunet_core::tensor::{ConvGeometry, Tape, Tensor3, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, b: usize, c: usize, l: usize) -> Tensor3<f64> {
    let data = (0..b * c * l).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor3::from_vec(b, c, l, data).unwrap()
}

/// Naive sliding dot product, summed as bias + Σ_i Σ_k in that order.
pub fn naive_conv(
    x: &Tensor3<f64>,
    w: &Tensor3<f64>,
    bias: &[f64],
    geom: ConvGeometry,
) -> Tensor3<f64> {
    let (nb, c_in, len) = x.shape();
    let (c_out, _, f) = w.shape();
    let padded = (len + geom.pad_left + geom.pad_right) as isize;
    let span = (geom.dilation * (f - 1) + 1) as isize;
    let out_len = ((padded - span) / geom.stride as isize + 1) as usize;
    let mut out = Vec::new();
    for b in 0..nb {
        for o in 0..c_out {
            for t in 0..out_len {
                let mut acc = bias[o];
                for i in 0..c_in {
                    for k in 0..f {
                        let pos = (t * geom.stride + k * geom.dilation) as isize - geom.pad_left as isize;
                        if pos >= 0 && (pos as usize) < len {
                            acc += w.get(o, i, k) * x.get(b, i, pos as usize);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor3::from_vec(nb, c_out, out_len, out).unwrap()
}

/// Relative error with a small floor so that two near-zero values agree.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares the analytic gradient of a scalar graph against central
/// differences with step `eps` for every element of every input. Returns
/// the worst relative error.
pub fn gradcheck<F>(inputs: &[Tensor3<f64>], eps: f64, build: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .map(|g| g.data().to_vec())
                .unwrap_or_else(|| vec![0.0; tape.value(v).numel()])
        })
        .collect();

    let eval = |inputs: &[Tensor3<f64>]| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
        let l = build(&mut t, &vs);
        t.value(l).data()[0]
    };

    let mut worst: f64 = 0.0;
    for (n, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[n].data_mut()[j] += eps;
            let mut minus = inputs.to_vec();
            minus[n].data_mut()[j] -= eps;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            worst = worst.max(rel_err(analytic[n][j], numeric));
        }
    }
    worst
}

/// Random projection to a scalar so every output element carries weight.
pub fn project(tape: &mut Tape<f64>, v: Var, seed: u64) -> Var {
    let n = tape.value(v).numel();
    let mut r = rng(seed);
    let coeffs = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    tape.dot_const(v, coeffs).unwrap()
}
