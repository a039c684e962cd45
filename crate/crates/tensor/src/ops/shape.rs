use crate::error::{dim_err, Result};
use crate::tensor::{numel_of, strides_of, Tensor};

/// Copies `x` (laid out as `shape`) into the axis order `perm`.
fn permute_data(x: &[f32], shape: &[usize], perm: &[usize]) -> Vec<f32> {
    let nd = shape.len();
    let in_strides = strides_of(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    // stride in the input for each output axis
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(x.len());
    let inner = out_shape[nd - 1];
    let inner_stride = src_strides[nd - 1];
    let outer_total = x.len() / inner;
    let mut idx = vec![0usize; nd - 1];
    for _ in 0..outer_total {
        let base: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        if inner_stride == 1 {
            out.extend_from_slice(&x[base..base + inner]);
        } else {
            out.extend((0..inner).map(|j| x[base + j * inner_stride]));
        }
        for d in (0..nd - 1).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel_of(shape) != self.numel() || shape.iter().any(|&d| d == 0) {
            return dim_err(format!("cannot reshape {:?} into {:?}", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(|g, _, _| vec![Some(g.to_vec())]),
        ))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let nd = self.ndim();
        let mut seen = vec![false; nd];
        if perm.len() != nd || perm.iter().any(|&p| p >= nd || std::mem::replace(&mut seen[p], true)) {
            return dim_err(format!("invalid permutation {perm:?} for shape {:?}", self.shape()));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape()[p]).collect();
        let data = permute_data(self.data(), self.shape(), perm);
        let mut inverse = vec![0; nd];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let grad_shape = out_shape.clone();
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(permute_data(g, &grad_shape, &inverse))]),
        ))
    }

    /// Swaps two axes.
    pub fn transpose(&self, a: usize, b: usize) -> Result<Tensor> {
        self.check_axis(a, "transpose")?;
        self.check_axis(b, "transpose")?;
        let mut perm: Vec<usize> = (0..self.ndim()).collect();
        perm.swap(a, b);
        self.permute(&perm)
    }

    /// Concatenates along `axis`; all other axes must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            return dim_err("concat of zero tensors");
        };
        first.check_axis(axis, "concat")?;
        for p in parts {
            let ok = p.ndim() == first.ndim()
                && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return dim_err(format!(
                    "concat: shape {:?} incompatible with {:?} on axis {axis}",
                    p.shape(),
                    first.shape()
                ));
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                data.extend_from_slice(&p.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::from_op(
            shape,
            data,
            parts.to_vec(),
            Box::new(move |g, _, p| {
                let mut out: Vec<Option<Vec<f32>>> = p
                    .iter()
                    .zip(&lens)
                    .map(|(t, &l)| t.requires_grad().then(|| Vec::with_capacity(outer * l * inner)))
                    .collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (slot, &l) in out.iter_mut().zip(&lens) {
                        let n = l * inner;
                        if let Some(v) = slot {
                            v.extend_from_slice(&g[pos..pos + n]);
                        }
                        pos += n;
                    }
                }
                out
            }),
        ))
    }

    /// `len` consecutive entries of `axis` starting at `start`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        self.check_axis(axis, "slice")?;
        let dim = self.shape()[axis];
        if len == 0 || start + len > dim {
            return dim_err(format!("slice [{start}, {}) out of range for axis of size {dim}", start + len));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(
            shape,
            data,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![0f32; outer * dim * inner];
                for o in 0..outer {
                    let base = (o * dim + start) * inner;
                    gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Row gather on a `[B, N, D]` tensor with per-batch index lists:
    /// `out[b, i, :] = x[b, indices[b][i], :]`. All lists must have the same
    /// length. Repeated indices are allowed; their gradients add up.
    pub fn gather_rows(&self, indices: &[Vec<usize>]) -> Result<Tensor> {
        if self.ndim() != 3 {
            return dim_err(format!("gather_rows expects [B, N, D], got {:?}", self.shape()));
        }
        let (b, n, d) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        if indices.len() != b {
            return dim_err(format!("gather_rows: {} index lists for batch of {b}", indices.len()));
        }
        let m = indices[0].len();
        if m == 0 || indices.iter().any(|l| l.len() != m || l.iter().any(|&i| i >= n)) {
            return dim_err("gather_rows: ragged, empty or out-of-range index lists");
        }
        let mut data = Vec::with_capacity(b * m * d);
        for (bi, list) in indices.iter().enumerate() {
            for &i in list {
                let base = (bi * n + i) * d;
                data.extend_from_slice(&self.data()[base..base + d]);
            }
        }
        let indices = indices.to_vec();
        Ok(Tensor::from_op(
            vec![b, m, d],
            data,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![0f32; b * n * d];
                for (bi, list) in indices.iter().enumerate() {
                    for (j, &i) in list.iter().enumerate() {
                        let dst = (bi * n + i) * d;
                        let src = (bi * m + j) * d;
                        gx[dst..dst + d]
                            .iter_mut()
                            .zip(&g[src..src + d])
                            .for_each(|(a, v)| *a += v);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arange(shape: &[usize]) -> Tensor {
        Tensor::new(shape, (0..numel_of(shape)).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn permute_matches_index_math() {
        let x = arange(&[2, 3, 4]);
        let y = x.permute(&[2, 0, 1]).unwrap();
        assert_eq!(y.shape(), &[4, 2, 3]);
        for a in 0..4 {
            for b in 0..2 {
                for c in 0..3 {
                    assert_eq!(y.data()[a * 6 + b * 3 + c], x.data()[b * 12 + c * 4 + a]);
                }
            }
        }
    }

    #[test]
    fn invalid_permutation_rejected() {
        let x = arange(&[2, 3]);
        assert!(x.permute(&[0, 0]).is_err());
        assert!(x.permute(&[0]).is_err());
        assert!(x.transpose(0, 2).is_err());
    }

    #[test]
    fn concat_and_slice_invert() {
        let a = arange(&[2, 2, 3]);
        let b = arange(&[2, 1, 3]);
        let c = Tensor::concat(&[a.clone(), b.clone()], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3, 3]);
        assert_eq!(c.slice(1, 0, 2).unwrap().data(), a.data());
        assert_eq!(c.slice(1, 2, 1).unwrap().data(), b.data());
        assert!(c.slice(1, 2, 2).is_err());
    }

    #[test]
    fn gather_rows_repeats_accumulate() {
        let x = Tensor::param(&[1, 3, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let y = x.gather_rows(&[vec![2, 2, 0]]).unwrap();
        assert_eq!(y.data(), &[4.0, 5.0, 4.0, 5.0, 0.0, 1.0]);
        y.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn reshape_rejects_wrong_count() {
        assert!(arange(&[2, 3]).reshape(&[4]).is_err());
    }
}
