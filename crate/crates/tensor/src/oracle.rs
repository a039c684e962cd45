//! Independent f64 reference forwards and a finite-difference gradient check.
//!
//! Each [`OpCase`] pairs an engine forward (f32, autodiff) with a naive loop
//! implementation in f64. The check contracts the op output with a fixed
//! random cotangent `r`, takes analytic gradients of `Σ r·op(x)` from the
//! engine, and compares them with central differences of the f64 reference.
//!
//! The reported error is `max |analytic - numeric| / max |numeric|`, i.e.
//! relative to the gradient's own scale, so near-zero entries cannot blow
//! the ratio up.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Conv3dSpec, Result, Tensor};

pub type EngineFn = Box<dyn Fn(&[Tensor]) -> Result<Tensor>>;
pub type ReferenceFn = Box<dyn Fn(&[Vec<f64>]) -> Vec<f64>>;

pub struct OpCase {
    pub name: &'static str,
    pub input_shapes: Vec<Vec<usize>>,
    pub engine: EngineFn,
    pub reference: ReferenceFn,
}

#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub max_rel_err: f64,
    /// Largest forward mismatch between engine and reference.
    pub forward_err: f64,
}

pub const FD_STEP: f64 = 1e-3;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Runs the finite-difference check for one case and seed.
pub fn check(case: &OpCase, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Inputs are rounded to f32 first so both paths see identical values.
    let inputs: Vec<Vec<f64>> = case
        .input_shapes
        .iter()
        .map(|s| {
            random_vec(&mut rng, s.iter().product())
                .into_iter()
                .map(|v| v as f32 as f64)
                .collect()
        })
        .collect();
    let params: Vec<Tensor> = case
        .input_shapes
        .iter()
        .zip(&inputs)
        .map(|(s, v)| Tensor::param(s, v.iter().map(|&x| x as f32).collect()))
        .collect::<Result<_>>()?;

    let out = (case.engine)(&params)?;
    let reference_out = (case.reference)(&inputs);
    assert_eq!(out.numel(), reference_out.len(), "{}: reference size mismatch", case.name);
    let forward_err = out
        .data()
        .iter()
        .zip(&reference_out)
        .map(|(a, b)| (*a as f64 - b).abs())
        .fold(0.0, f64::max);

    let cotangent: Vec<f64> = random_vec(&mut rng, out.numel());
    let r = Tensor::new(out.shape(), cotangent.iter().map(|&v| v as f32).collect())?;
    out.mul(&r)?.sum().backward()?;

    let loss = |xs: &[Vec<f64>]| -> f64 {
        (case.reference)(xs).iter().zip(&cotangent).map(|(a, b)| a * b).sum()
    };

    let mut worst_abs = 0f64;
    let mut scale = 0f64;
    for (i, p) in params.iter().enumerate() {
        let analytic = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
        let mut xs = inputs.clone();
        for j in 0..xs[i].len() {
            let orig = xs[i][j];
            xs[i][j] = orig + FD_STEP;
            let up = loss(&xs);
            xs[i][j] = orig - FD_STEP;
            let down = loss(&xs);
            xs[i][j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst_abs = worst_abs.max((analytic[j] as f64 - numeric).abs());
            scale = scale.max(numeric.abs());
        }
    }
    Ok(GradReport {
        max_rel_err: worst_abs / scale.max(1e-12),
        forward_err,
    })
}

// ---- reference implementations -------------------------------------------

fn ref_matmul(a: &[f64], b: &[f64], batch: usize, b_batched: bool, m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; batch * m * n];
    for bi in 0..batch {
        let boff = if b_batched { bi * k * n } else { 0 };
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[bi * m * k + i * k + p] * b[boff + p * n + j];
                }
                out[bi * m * n + i * n + j] = s;
            }
        }
    }
    out
}

fn ref_gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
}

fn ref_softmax_rows(x: &[f64], rows: usize, len: usize, stride_inner: usize) -> Vec<f64> {
    // softmax over an axis of length `len` with `stride_inner` trailing elements
    let mut out = vec![0.0; x.len()];
    for o in 0..rows {
        for i in 0..stride_inner {
            let idx = |l: usize| (o * len + l) * stride_inner + i;
            let z: f64 = (0..len).map(|l| x[idx(l)].exp()).sum();
            for l in 0..len {
                out[idx(l)] = x[idx(l)].exp() / z;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn ref_conv3d(
    x: &[f64],
    w: &[f64],
    bias: &[f64],
    xs: [usize; 5],
    o: usize,
    k: [usize; 3],
    s: [usize; 3],
    p: [usize; 3],
) -> Vec<f64> {
    let [b, c, t, h, wd] = xs;
    let od: Vec<usize> = (0..3)
        .map(|a| ([t, h, wd][a] + 2 * p[a] - k[a]) / s[a] + 1)
        .collect();
    let mut out = Vec::new();
    for bi in 0..b {
        for oc in 0..o {
            for to in 0..od[0] {
                for ho in 0..od[1] {
                    for wo in 0..od[2] {
                        let mut acc = bias[oc];
                        for ci in 0..c {
                            for dt in 0..k[0] {
                                for dh in 0..k[1] {
                                    for dw in 0..k[2] {
                                        let ti = (to * s[0] + dt) as isize - p[0] as isize;
                                        let hi = (ho * s[1] + dh) as isize - p[1] as isize;
                                        let wi = (wo * s[2] + dw) as isize - p[2] as isize;
                                        if ti < 0 || hi < 0 || wi < 0 || ti >= t as isize || hi >= h as isize || wi >= wd as isize {
                                            continue;
                                        }
                                        let xv = x[(((bi * c + ci) * t + ti as usize) * h + hi as usize) * wd + wi as usize];
                                        let wv = w[(((oc * c + ci) * k[0] + dt) * k[1] + dh) * k[2] + dw];
                                        acc += xv * wv;
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
    }
    out
}

/// One case per differentiable operation, with small randomised shapes.
pub fn all_cases() -> Vec<OpCase> {
    let mut cases = Vec::new();

    cases.push(OpCase {
        name: "matmul",
        input_shapes: vec![vec![3, 4], vec![4, 2]],
        engine: Box::new(|p| p[0].matmul(&p[1])),
        reference: Box::new(|x| ref_matmul(&x[0], &x[1], 1, false, 3, 4, 2)),
    });
    cases.push(OpCase {
        name: "matmul_batched_broadcast",
        input_shapes: vec![vec![2, 3, 4], vec![4, 5]],
        engine: Box::new(|p| p[0].matmul(&p[1])),
        reference: Box::new(|x| ref_matmul(&x[0], &x[1], 2, false, 3, 4, 5)),
    });
    cases.push(OpCase {
        name: "matmul_batched",
        input_shapes: vec![vec![2, 2, 3], vec![2, 3, 2]],
        engine: Box::new(|p| p[0].matmul(&p[1])),
        reference: Box::new(|x| ref_matmul(&x[0], &x[1], 2, true, 2, 3, 2)),
    });
    cases.push(OpCase {
        name: "add",
        input_shapes: vec![vec![2, 3], vec![2, 3]],
        engine: Box::new(|p| p[0].add(&p[1])),
        reference: Box::new(|x| x[0].iter().zip(&x[1]).map(|(a, b)| a + b).collect()),
    });
    cases.push(OpCase {
        name: "sub",
        input_shapes: vec![vec![2, 3], vec![2, 3]],
        engine: Box::new(|p| p[0].sub(&p[1])),
        reference: Box::new(|x| x[0].iter().zip(&x[1]).map(|(a, b)| a - b).collect()),
    });
    cases.push(OpCase {
        name: "mul",
        input_shapes: vec![vec![3, 2], vec![3, 2]],
        engine: Box::new(|p| p[0].mul(&p[1])),
        reference: Box::new(|x| x[0].iter().zip(&x[1]).map(|(a, b)| a * b).collect()),
    });
    cases.push(OpCase {
        name: "scale",
        input_shapes: vec![vec![5]],
        engine: Box::new(|p| Ok(p[0].scale(-1.7))),
        reference: Box::new(|x| x[0].iter().map(|a| a * -1.7f32 as f64).collect()),
    });
    cases.push(OpCase {
        name: "add_bias",
        input_shapes: vec![vec![2, 3, 4], vec![4]],
        engine: Box::new(|p| p[0].add_bias(&p[1])),
        reference: Box::new(|x| x[0].iter().enumerate().map(|(i, a)| a + x[1][i % 4]).collect()),
    });
    cases.push(OpCase {
        name: "expand_to",
        input_shapes: vec![vec![3]],
        engine: Box::new(|p| p[0].expand_to(&[2, 2, 3])),
        reference: Box::new(|x| (0..12).map(|i| x[0][i % 3]).collect()),
    });
    cases.push(OpCase {
        name: "sum",
        input_shapes: vec![vec![2, 3]],
        engine: Box::new(|p| Ok(p[0].sum())),
        reference: Box::new(|x| vec![x[0].iter().sum()]),
    });
    cases.push(OpCase {
        name: "mean",
        input_shapes: vec![vec![4, 2]],
        engine: Box::new(|p| Ok(p[0].mean())),
        reference: Box::new(|x| vec![x[0].iter().sum::<f64>() / 8.0]),
    });
    cases.push(OpCase {
        name: "mean_axis",
        input_shapes: vec![vec![2, 3, 4]],
        engine: Box::new(|p| p[0].mean_axis(1)),
        reference: Box::new(|x| {
            let mut out = vec![0.0; 8];
            for o in 0..2 {
                for l in 0..3 {
                    for i in 0..4 {
                        out[o * 4 + i] += x[0][(o * 3 + l) * 4 + i] / 3.0;
                    }
                }
            }
            out
        }),
    });
    cases.push(OpCase {
        name: "gelu",
        input_shapes: vec![vec![3, 4]],
        engine: Box::new(|p| Ok(p[0].scale(3.0).gelu())),
        reference: Box::new(|x| x[0].iter().map(|&a| ref_gelu(3.0 * a)).collect()),
    });
    cases.push(OpCase {
        name: "sigmoid",
        input_shapes: vec![vec![6]],
        engine: Box::new(|p| Ok(p[0].scale(3.0).sigmoid())),
        reference: Box::new(|x| x[0].iter().map(|&a| 1.0 / (1.0 + (-3.0 * a).exp())).collect()),
    });
    cases.push(OpCase {
        name: "softmax_last_axis",
        input_shapes: vec![vec![3, 5]],
        engine: Box::new(|p| p[0].scale(2.0).softmax(1)),
        reference: Box::new(|x| {
            let y: Vec<f64> = x[0].iter().map(|a| 2.0 * a).collect();
            ref_softmax_rows(&y, 3, 5, 1)
        }),
    });
    cases.push(OpCase {
        name: "softmax_inner_axis",
        input_shapes: vec![vec![2, 4, 3]],
        engine: Box::new(|p| p[0].scale(2.0).softmax(1)),
        reference: Box::new(|x| {
            let y: Vec<f64> = x[0].iter().map(|a| 2.0 * a).collect();
            ref_softmax_rows(&y, 2, 4, 3)
        }),
    });
    cases.push(OpCase {
        name: "layer_norm",
        input_shapes: vec![vec![2, 8], vec![8], vec![8]],
        engine: Box::new(|p| p[0].layer_norm(&p[1], &p[2], 1e-5)),
        reference: Box::new(|x| {
            let mut out = Vec::new();
            for r in 0..2 {
                let row = &x[0][r * 8..(r + 1) * 8];
                let mean = row.iter().sum::<f64>() / 8.0;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
                let sd = (var + 1e-5f32 as f64).sqrt();
                for j in 0..8 {
                    out.push((row[j] - mean) / sd * x[1][j] + x[2][j]);
                }
            }
            out
        }),
    });
    cases.push(OpCase {
        name: "reshape",
        input_shapes: vec![vec![2, 6]],
        engine: Box::new(|p| p[0].reshape(&[3, 4])),
        reference: Box::new(|x| x[0].clone()),
    });
    cases.push(OpCase {
        name: "permute",
        input_shapes: vec![vec![2, 3, 4]],
        engine: Box::new(|p| p[0].permute(&[1, 2, 0])),
        reference: Box::new(|x| {
            let mut out = Vec::new();
            for b in 0..3 {
                for c in 0..4 {
                    for a in 0..2 {
                        out.push(x[0][a * 12 + b * 4 + c]);
                    }
                }
            }
            out
        }),
    });
    cases.push(OpCase {
        name: "transpose",
        input_shapes: vec![vec![3, 5]],
        engine: Box::new(|p| p[0].transpose(0, 1)),
        reference: Box::new(|x| {
            let mut out = Vec::new();
            for c in 0..5 {
                for r in 0..3 {
                    out.push(x[0][r * 5 + c]);
                }
            }
            out
        }),
    });
    cases.push(OpCase {
        name: "concat",
        input_shapes: vec![vec![2, 2, 3], vec![2, 1, 3]],
        engine: Box::new(|p| Tensor::concat(&[p[0].clone(), p[1].clone()], 1)),
        reference: Box::new(|x| {
            let mut out = Vec::new();
            for o in 0..2 {
                out.extend_from_slice(&x[0][o * 6..(o + 1) * 6]);
                out.extend_from_slice(&x[1][o * 3..(o + 1) * 3]);
            }
            out
        }),
    });
    cases.push(OpCase {
        name: "slice",
        input_shapes: vec![vec![3, 5]],
        engine: Box::new(|p| p[0].slice(1, 1, 3)),
        reference: Box::new(|x| (0..3).flat_map(|r| (1..4).map(move |c| (r, c))).map(|(r, c)| x[0][r * 5 + c]).collect()),
    });
    cases.push(OpCase {
        name: "gather_rows",
        input_shapes: vec![vec![2, 4, 3]],
        engine: Box::new(|p| p[0].gather_rows(&[vec![3, 0, 3], vec![1, 2, 2]])),
        reference: Box::new(|x| {
            let idx = [[3usize, 0, 3], [1, 2, 2]];
            let mut out = Vec::new();
            for (b, list) in idx.iter().enumerate() {
                for &i in list {
                    out.extend_from_slice(&x[0][(b * 4 + i) * 3..(b * 4 + i + 1) * 3]);
                }
            }
            out
        }),
    });
    cases.push(OpCase {
        name: "conv3d_strided_padded",
        input_shapes: vec![vec![2, 2, 4, 5, 5], vec![3, 2, 3, 3, 2], vec![3]],
        engine: Box::new(|p| p[0].conv3d(&p[1], &p[2], Conv3dSpec::new([3, 3, 2], [2, 1, 2], [1, 1, 0]))),
        reference: Box::new(|x| ref_conv3d(&x[0], &x[1], &x[2], [2, 2, 4, 5, 5], 3, [3, 3, 2], [2, 1, 2], [1, 1, 0])),
    });
    cases.push(OpCase {
        name: "conv3d_patchify",
        input_shapes: vec![vec![1, 1, 4, 4, 4], vec![2, 1, 2, 2, 2], vec![2]],
        engine: Box::new(|p| p[0].conv3d(&p[1], &p[2], Conv3dSpec::new([2, 2, 2], [2, 2, 2], [0, 0, 0]))),
        reference: Box::new(|x| ref_conv3d(&x[0], &x[1], &x[2], [1, 1, 4, 4, 4], 2, [2, 2, 2], [2, 2, 2], [0, 0, 0])),
    });
    cases.push(OpCase {
        name: "upsample_nearest2x",
        input_shapes: vec![vec![2, 2, 3]],
        engine: Box::new(|p| p[0].upsample_nearest2x()),
        reference: Box::new(|x| {
            let mut out = Vec::new();
            for pl in 0..2 {
                for i in 0..4 {
                    for j in 0..6 {
                        out.push(x[0][pl * 6 + (i / 2) * 3 + j / 2]);
                    }
                }
            }
            out
        }),
    });
    cases
}
