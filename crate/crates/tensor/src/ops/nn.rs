use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

impl Tensor {
    /// Softmax along `axis`, stabilised by subtracting the per-slice maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        self.check_axis(axis, "softmax")?;
        let shape = self.shape();
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.data();
        let mut out = vec![0f32; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let max = (0..len).map(|l| x[at(l)]).fold(f32::NEG_INFINITY, f32::max);
                let mut total = 0f64;
                for l in 0..len {
                    let e = ((x[at(l)] - max) as f64).exp();
                    out[at(l)] = e as f32;
                    total += e;
                }
                for l in 0..len {
                    out[at(l)] = (out[at(l)] as f64 / total) as f32;
                }
            }
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, y, _| {
                let mut gx = vec![0f32; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let dot: f64 = (0..len).map(|l| g[at(l)] as f64 * y[at(l)] as f64).sum();
                        for l in 0..len {
                            gx[at(l)] = (y[at(l)] as f64 * (g[at(l)] as f64 - dot)) as f32;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Normalises each vector along the last axis to zero mean and unit
    /// variance (biased estimator), then applies `gamma`/`beta`.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
        let d = *self.shape().last().unwrap();
        if gamma.shape() != [d] || beta.shape() != [d] {
            return dim_err(format!(
                "layer_norm: gamma {:?} / beta {:?} must be [{d}]",
                gamma.shape(),
                beta.shape()
            ));
        }
        let rows = self.numel() / d;
        let x = self.data();
        let mut xhat = vec![0f32; x.len()];
        let mut inv_std = vec![0f64; rows];
        let mut out = vec![0f32; x.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps as f64).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] as f64 - mean) * is;
                xhat[r * d + j] = h as f32;
                out[r * d + j] = (h * gamma.data()[j] as f64 + beta.data()[j] as f64) as f32;
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g, _, p| {
                let gamma = p[1].data();
                let gx = p[0].requires_grad().then(|| {
                    let mut gx = vec![0f32; g.len()];
                    for r in 0..rows {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        let mut mean_dh = 0f64;
                        let mut mean_dh_h = 0f64;
                        for j in 0..d {
                            let dh = gr[j] as f64 * gamma[j] as f64;
                            mean_dh += dh;
                            mean_dh_h += dh * hr[j] as f64;
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        for j in 0..d {
                            let dh = gr[j] as f64 * gamma[j] as f64;
                            gx[r * d + j] = (inv_std[r] * (dh - mean_dh - hr[j] as f64 * mean_dh_h)) as f32;
                        }
                    }
                    gx
                });
                let (gg, gb) = if p[1].requires_grad() || p[2].requires_grad() {
                    let mut gg = vec![0f64; d];
                    let mut gb = vec![0f64; d];
                    for r in 0..rows {
                        for j in 0..d {
                            let gv = g[r * d + j] as f64;
                            gg[j] += gv * xhat[r * d + j] as f64;
                            gb[j] += gv;
                        }
                    }
                    let cast = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>();
                    (
                        p[1].requires_grad().then(|| cast(gg)),
                        p[2].requires_grad().then(|| cast(gb)),
                    )
                } else {
                    (None, None)
                };
                vec![gx, gg, gb]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric_pair() {
        let y = Tensor::new(&[2], vec![0.0, 0.0]).unwrap().softmax(0).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_large_logits_stay_finite() {
        let y = Tensor::new(&[3], vec![1000.0, 1000.0, -1000.0]).unwrap().softmax(0).unwrap();
        assert!(y.data().iter().all(|v| v.is_finite()));
        assert!((y.data()[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn softmax_bad_axis() {
        assert!(Tensor::zeros(&[2, 2]).softmax(2).is_err());
    }

    #[test]
    fn layer_norm_constant_collapses_to_beta() {
        let x = Tensor::full(&[4], 3.0);
        let y = x.layer_norm(&Tensor::full(&[4], 1.0), &Tensor::zeros(&[4]), 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_two_point() {
        let x = Tensor::new(&[2], vec![1.0, 3.0]).unwrap();
        let y = x.layer_norm(&Tensor::full(&[2], 1.0), &Tensor::zeros(&[2]), 1e-12).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-6 && (y.data()[1] - 1.0).abs() < 1e-6);
    }
}
