use std::collections::BTreeMap;

use maepose_tensor::Tensor;

use super::ParamStore;
use crate::error::{Error, Result};

/// A parameter store bound into graph leaves for one forward/backward pass.
pub struct Bound {
    tensors: BTreeMap<String, Tensor>,
    eps: f32,
}

impl Bound {
    /// Binds every parameter; names for which `trainable` is true become
    /// gradient-tracking leaves, the rest constants.
    pub fn new(store: &ParamStore, ln_eps: f64, trainable: impl Fn(&str) -> bool) -> Result<Self> {
        let mut tensors = BTreeMap::new();
        for (name, p) in store.iter() {
            let t = if trainable(name) {
                Tensor::param(&p.shape, p.data.clone())?
            } else {
                Tensor::new(&p.shape, p.data.clone())?
            };
            tensors.insert(name.clone(), t);
        }
        Ok(Self { tensors, eps: ln_eps as f32 })
    }

    /// All parameters trainable.
    pub fn train(store: &ParamStore, ln_eps: f64) -> Result<Self> {
        Self::new(store, ln_eps, |_| true)
    }

    /// All parameters constant.
    pub fn frozen(store: &ParamStore, ln_eps: f64) -> Result<Self> {
        Self::new(store, ln_eps, |_| false)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("model has no parameter {name}")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    /// Gradients of every trainable leaf that received one.
    pub fn grads(&self) -> BTreeMap<String, Vec<f32>> {
        self.tensors
            .iter()
            .filter_map(|(n, t)| t.grad().map(|g| (n.clone(), g)))
            .collect()
    }

    pub(crate) fn linear(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        let w = self.get(&format!("{name}.weight"))?;
        let b = self.get(&format!("{name}.bias"))?;
        Ok(x.matmul(w)?.add_bias(b)?)
    }

    pub(crate) fn norm(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        let g = self.get(&format!("{name}.weight"))?;
        let b = self.get(&format!("{name}.bias"))?;
        Ok(x.layer_norm(g, b, self.eps)?)
    }

    /// Pre-norm transformer block over `[B, N, D]`.
    pub(crate) fn block(&self, x: &Tensor, prefix: &str, heads: usize) -> Result<Tensor> {
        let h = self.norm(x, &format!("{prefix}.norm1"))?;
        let qkv = self.linear(&h, &format!("{prefix}.attn.qkv"))?;
        let d = x.shape()[2];
        let q = qkv.slice(2, 0, d)?;
        let k = qkv.slice(2, d, d)?;
        let v = qkv.slice(2, 2 * d, d)?;
        let a = attend(&q, &k, &v, heads)?;
        let x = x.add(&self.linear(&a, &format!("{prefix}.attn.proj"))?)?;
        let h = self.norm(&x, &format!("{prefix}.norm2"))?;
        let h = self.linear(&h, &format!("{prefix}.mlp.fc1"))?.gelu();
        let h = self.linear(&h, &format!("{prefix}.mlp.fc2"))?;
        Ok(x.add(&h)?)
    }
}

fn split_heads(x: &Tensor, heads: usize) -> Result<Tensor> {
    let s = x.shape();
    let (b, n, d) = (s[0], s[1], s[2]);
    Ok(x.reshape(&[b, n, heads, d / heads])?.permute(&[0, 2, 1, 3])?)
}

/// Multi-head scaled dot-product attention. `q` is `[B, N, D]`, `k` and `v`
/// are `[B, M, D]`; returns `[B, N, D]`.
pub(crate) fn attend(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Result<Tensor> {
    let (b, n, d) = (q.shape()[0], q.shape()[1], q.shape()[2]);
    let dh = d / heads;
    let qh = split_heads(q, heads)?;
    let kt = split_heads(k, heads)?.transpose(2, 3)?;
    let vh = split_heads(v, heads)?;
    let scores = qh.matmul(&kt)?.scale(1.0 / (dh as f32).sqrt());
    let att = scores.softmax(3)?;
    let out = att.matmul(&vh)?;
    Ok(out.permute(&[0, 2, 1, 3])?.reshape(&[b, n, d])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_keys_average_values() {
        // identical keys give uniform attention, so each query returns the mean value row
        let q = Tensor::new(&[1, 2, 4], vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 2.0, 0.0]).unwrap();
        let k = Tensor::full(&[1, 3, 4], 0.3);
        let v = Tensor::new(&[1, 3, 4], (0..12).map(|i| i as f32).collect()).unwrap();
        let out = attend(&q, &k, &v, 2).unwrap();
        assert_eq!(out.shape(), &[1, 2, 4]);
        for row in out.data().chunks(4) {
            for (c, val) in row.iter().enumerate() {
                assert!((val - (c as f32 + 4.0)).abs() < 1e-5);
            }
        }
    }
}
