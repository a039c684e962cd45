use crate::error::{dim_err, Result};
use crate::tensor::{numel_of, strides_of, Tensor};

/// A read-only matrix view: element `(r, c)` lives at `r * rs + c * cs`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f32],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    /// Row-major `rows × cols`.
    pub fn rows(data: &'a [f32], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    /// The transpose of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f32], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.rs + c * self.cs]
    }
}

const MR: usize = 4;
const NR: usize = 4;

/// `out[m×n] (+)= a[m×k] · b[k×n]` with f64 accumulation. Both operands are
/// packed into f64 panels and multiplied by a 4×4 register tile.
pub(crate) fn gemm_view(a: View, b: View, out: &mut [f32], m: usize, k: usize, n: usize, accumulate: bool) {
    debug_assert!(out.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let nb = n.div_ceil(NR);
    let mut bp = vec![0f64; nb * k * NR];
    for jb in 0..nb {
        let panel = &mut bp[jb * k * NR..(jb + 1) * k * NR];
        for jj in 0..NR.min(n - jb * NR) {
            let j = jb * NR + jj;
            for p in 0..k {
                panel[p * NR + jj] = b.at(p, j) as f64;
            }
        }
    }
    let mut ap = vec![0f64; k * MR];
    for ib in (0..m).step_by(MR) {
        let mr = MR.min(m - ib);
        for ii in 0..MR {
            for p in 0..k {
                ap[p * MR + ii] = if ii < mr { a.at(ib + ii, p) as f64 } else { 0.0 };
            }
        }
        for jb in 0..nb {
            let panel = &bp[jb * k * NR..(jb + 1) * k * NR];
            let mut acc = [[0f64; NR]; MR];
            for (av, bv) in ap.chunks_exact(MR).zip(panel.chunks_exact(NR)) {
                let av: &[f64; MR] = av.try_into().expect("MR chunk");
                let bv: &[f64; NR] = bv.try_into().expect("NR chunk");
                for ii in 0..MR {
                    for jj in 0..NR {
                        acc[ii][jj] += av[ii] * bv[jj];
                    }
                }
            }
            let nr = NR.min(n - jb * NR);
            for (ii, row) in acc.iter().enumerate().take(mr) {
                let o = &mut out[(ib + ii) * n + jb * NR..(ib + ii) * n + jb * NR + nr];
                if accumulate {
                    o.iter_mut().zip(row).for_each(|(o, s)| *o += *s as f32);
                } else {
                    o.iter_mut().zip(row).for_each(|(o, s)| *o = *s as f32);
                }
            }
        }
    }
}

/// Row-major `out[m×n] (+)= a[m×k] · b[k×n]`.
pub(crate) fn gemm(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize, accumulate: bool) {
    gemm_view(View::rows(a, k), View::rows(b, n), out, m, k, n, accumulate);
}

/// Offsets of each broadcast batch element into `a`, `b` and the output.
struct BatchPlan {
    out_batch: Vec<usize>,
    a_off: Vec<usize>,
    b_off: Vec<usize>,
}

fn plan_batches(a_batch: &[usize], b_batch: &[usize], a_mat: usize, b_mat: usize) -> Option<BatchPlan> {
    let nd = a_batch.len().max(b_batch.len());
    let pad = |s: &[usize]| -> Vec<usize> {
        let mut v = vec![1; nd - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (pa, pb) = (pad(a_batch), pad(b_batch));
    let mut out_batch = Vec::with_capacity(nd);
    for (&x, &y) in pa.iter().zip(&pb) {
        match (x, y) {
            _ if x == y => out_batch.push(x),
            (1, _) => out_batch.push(y),
            (_, 1) => out_batch.push(x),
            _ => return None,
        }
    }
    let sa = strides_of(&pa);
    let sb = strides_of(&pb);
    let so = strides_of(&out_batch);
    let total = numel_of(&out_batch);
    let mut a_off = Vec::with_capacity(total);
    let mut b_off = Vec::with_capacity(total);
    for flat in 0..total {
        let (mut ia, mut ib) = (0, 0);
        for d in 0..nd {
            let idx = (flat / so[d]) % out_batch[d];
            if pa[d] != 1 {
                ia += idx * sa[d];
            }
            if pb[d] != 1 {
                ib += idx * sb[d];
            }
        }
        a_off.push(ia * a_mat);
        b_off.push(ib * b_mat);
    }
    Some(BatchPlan { out_batch, a_off, b_off })
}

impl Tensor {
    /// Matrix product over the last two axes, with numpy-style broadcasting
    /// of any leading batch axes.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.ndim() < 2 || other.ndim() < 2 {
            return dim_err(format!(
                "matmul needs rank >= 2 operands, got {:?} and {:?}",
                self.shape(),
                other.shape()
            ));
        }
        let (sa, sb) = (self.shape(), other.shape());
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return dim_err(format!("matmul inner dimensions differ: {sa:?} x {sb:?}"));
        }
        let plan = plan_batches(&sa[..sa.len() - 2], &sb[..sb.len() - 2], m * k, k * n)
            .ok_or_else(|| crate::TensorError::Dimension(format!("matmul batch dims not broadcastable: {sa:?} x {sb:?}")))?;
        let batches = plan.a_off.len();
        let mut out = vec![0f32; batches * m * n];
        for i in 0..batches {
            gemm(
                &self.data()[plan.a_off[i]..],
                &other.data()[plan.b_off[i]..],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
                false,
            );
        }
        let mut shape = plan.out_batch.clone();
        shape.extend_from_slice(&[m, n]);
        let (a_len, b_len) = (self.numel(), other.numel());
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g, _, p| {
                let (a, b) = (&p[0], &p[1]);
                let ga = a.requires_grad().then(|| {
                    // dA = dC · Bᵀ
                    let mut ga = vec![0f32; a_len];
                    for i in 0..batches {
                        let bt = View::transposed(&b.data()[plan.b_off[i]..plan.b_off[i] + k * n], n);
                        gemm_view(
                            View::rows(&g[i * m * n..], n),
                            bt,
                            &mut ga[plan.a_off[i]..plan.a_off[i] + m * k],
                            m,
                            n,
                            k,
                            true,
                        );
                    }
                    ga
                });
                let gb = b.requires_grad().then(|| {
                    // dB = Aᵀ · dC
                    let mut gb = vec![0f32; b_len];
                    for i in 0..batches {
                        let at = View::transposed(&a.data()[plan.a_off[i]..plan.a_off[i] + m * k], k);
                        gemm_view(
                            at,
                            View::rows(&g[i * m * n..], n),
                            &mut gb[plan.b_off[i]..plan.b_off[i] + k * n],
                            k,
                            m,
                            n,
                            true,
                        );
                    }
                    gb
                });
                vec![ga, gb]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_leaves_input() {
        let eye = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(eye.matmul(&x).unwrap().data(), x.data());
    }

    #[test]
    fn hand_product() {
        let a = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(&[2, 1], vec![3.0, 4.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(a.matmul(&b).is_err());
        let a = Tensor::zeros(&[2, 4, 3]);
        let b = Tensor::zeros(&[3, 3, 2]);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn batch_broadcast() {
        let a = Tensor::new(&[2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[2, 1], vec![1.0, 1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1, 1]);
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn broadcast_operand_grad_sums_over_batch() {
        let a = Tensor::new(&[3, 1, 2], vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let w = Tensor::param(&[2, 1], vec![0.5, 0.5]).unwrap();
        a.matmul(&w).unwrap().sum().backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![3.0, 0.0]);
    }
}
