use crate::error::{dim_err, Result};
use crate::tensor::{numel_of, Tensor};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_COEF: f64 = 0.044_715;

fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "add")?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, _, p| {
                vec![
                    p[0].requires_grad().then(|| g.to_vec()),
                    p[1].requires_grad().then(|| g.to_vec()),
                ]
            }),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "sub")?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, _, p| {
                vec![
                    p[0].requires_grad().then(|| g.to_vec()),
                    p[1].requires_grad().then(|| g.iter().map(|v| -v).collect()),
                ]
            }),
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "mul")?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, _, p| {
                let ga = p[0].requires_grad().then(|| {
                    g.iter().zip(p[1].data()).map(|(g, b)| g * b).collect()
                });
                let gb = p[1].requires_grad().then(|| {
                    g.iter().zip(p[0].data()).map(|(g, a)| g * a).collect()
                });
                vec![ga, gb]
            }),
        ))
    }

    pub fn scale(&self, s: f32) -> Tensor {
        let data = self.data().iter().map(|v| v * s).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(g.iter().map(|v| v * s).collect())]),
        )
    }

    /// Adds `bias` broadcast over leading axes; `bias.shape()` must be a
    /// suffix of `self.shape()`. This is the only implicit broadcast besides
    /// batched matmul.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        if !is_suffix(bias.shape(), self.shape()) {
            return dim_err(format!(
                "add_bias: {:?} is not a suffix of {:?}",
                bias.shape(),
                self.shape()
            ));
        }
        let n = bias.numel();
        let mut data = self.to_vec();
        for chunk in data.chunks_mut(n) {
            chunk.iter_mut().zip(bias.data()).for_each(|(x, b)| *x += b);
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), bias.clone()],
            Box::new(move |g, _, p| {
                let gb = p[1].requires_grad().then(|| {
                    let mut acc = vec![0f64; n];
                    for chunk in g.chunks(n) {
                        acc.iter_mut().zip(chunk).for_each(|(a, v)| *a += *v as f64);
                    }
                    acc.into_iter().map(|v| v as f32).collect()
                });
                vec![p[0].requires_grad().then(|| g.to_vec()), gb]
            }),
        ))
    }

    /// Repeats `self` over new leading axes so the result has `shape`.
    pub fn expand_to(&self, shape: &[usize]) -> Result<Tensor> {
        if !is_suffix(self.shape(), shape) {
            return dim_err(format!(
                "expand_to: {:?} is not a suffix of {:?}",
                self.shape(),
                shape
            ));
        }
        let n = self.numel();
        let reps = numel_of(shape) / n;
        let mut data = Vec::with_capacity(n * reps);
        for _ in 0..reps {
            data.extend_from_slice(self.data());
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut acc = vec![0f64; n];
                for chunk in g.chunks(n) {
                    acc.iter_mut().zip(chunk).for_each(|(a, v)| *a += *v as f64);
                }
                vec![Some(acc.into_iter().map(|v| v as f32).collect())]
            }),
        ))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data().iter().map(|&v| v as f64).sum();
        let n = self.numel();
        Tensor::from_op(
            vec![1],
            vec![s as f32],
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(vec![g[0]; n])]),
        )
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        let s: f64 = self.data().iter().map(|&v| v as f64).sum();
        Tensor::from_op(
            vec![1],
            vec![(s / n as f64) as f32],
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(vec![(g[0] as f64 / n as f64) as f32; n])]),
        )
    }

    /// Mean over one axis, which is removed from the shape (unless it is the
    /// only axis, in which case the result has shape `[1]`).
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        self.check_axis(axis, "mean_axis")?;
        let shape = self.shape();
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![0f32; outer * inner];
        let mut acc = vec![0f64; inner];
        for o in 0..outer {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for l in 0..len {
                let base = (o * len + l) * inner;
                acc.iter_mut()
                    .zip(&self.data()[base..base + inner])
                    .for_each(|(a, v)| *a += *v as f64);
            }
            for (dst, a) in out[o * inner..(o + 1) * inner].iter_mut().zip(&acc) {
                *dst = (a / len as f64) as f32;
            }
        }
        let mut out_shape: Vec<usize> = shape[..axis].iter().chain(&shape[axis + 1..]).copied().collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        Ok(Tensor::from_op(
            out_shape,
            out,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![0f32; outer * len * inner];
                let inv = 1.0 / len as f32;
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        gx[base..base + inner]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, v)| *d = v * inv);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// GELU, tanh approximation:
    /// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    pub fn gelu(&self) -> Tensor {
        let data = self
            .data()
            .iter()
            .map(|&x| {
                let x = x as f64;
                let t = (SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x)).tanh();
                (0.5 * x * (1.0 + t)) as f32
            })
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, _, p| {
                let gx = g
                    .iter()
                    .zip(p[0].data())
                    .map(|(&g, &x)| {
                        let x = x as f64;
                        let t = (SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x)).tanh();
                        let dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x * x);
                        let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
                        (g as f64 * d) as f32
                    })
                    .collect();
                vec![Some(gx)]
            }),
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        let data = self
            .data()
            .iter()
            .map(|&x| (1.0 / (1.0 + (-(x as f64)).exp())) as f32)
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|g, y, _| {
                vec![Some(g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect())]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_fixed_point_at_zero() {
        let y = Tensor::new(&[1], vec![0.0]).unwrap().gelu();
        assert_eq!(y.item(), 0.0);
    }

    #[test]
    fn bias_must_be_suffix() {
        let x = Tensor::zeros(&[2, 3]);
        assert!(x.add_bias(&Tensor::zeros(&[2])).is_err());
        let y = x.add_bias(&Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn mean_axis_shapes() {
        let x = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(x.mean_axis(0).unwrap().data(), &[2.5, 3.5, 4.5]);
        assert_eq!(x.mean_axis(1).unwrap().data(), &[2.0, 5.0]);
        assert!(x.mean_axis(2).is_err());
    }

    #[test]
    fn expand_grad_sums_repeats() {
        let b = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        b.expand_to(&[3, 2]).unwrap().sum().backward().unwrap();
        assert_eq!(b.grad().unwrap(), vec![3.0, 3.0]);
    }
}
