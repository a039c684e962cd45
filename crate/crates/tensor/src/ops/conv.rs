use crate::error::{dim_err, Result};
use crate::ops::matmul::{gemm, gemm_view, View};
use crate::tensor::Tensor;

/// Static geometry of a 3-D convolution over `[B, C, T, H, W]` inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3dSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Conv3dSpec {
    pub fn new(kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Self {
        Self { kernel, stride, padding }
    }

    /// Output size per axis, `floor((D + 2p - k) / s) + 1`.
    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if self.stride[a] == 0 || padded < self.kernel[a] || self.kernel[a] == 0 {
                return dim_err(format!(
                    "conv3d: non-positive output on axis {a} (input {}, kernel {}, stride {}, padding {})",
                    input[a], self.kernel[a], self.stride[a], self.padding[a]
                ));
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }
}

struct Geometry {
    c: usize,
    inp: [usize; 3],
    out: [usize; 3],
    spec: Conv3dSpec,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.c * self.spec.kernel.iter().product::<usize>()
    }

    fn out_len(&self) -> usize {
        self.out.iter().product()
    }

    fn in_len(&self) -> usize {
        self.c * self.inp.iter().product::<usize>()
    }

    /// Visits every (column row, output position, input offset) triple that
    /// lands inside the unpadded input.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let [kt, kh, kw] = self.spec.kernel;
        let [st, sh, sw] = self.spec.stride;
        let [pt, ph, pw] = self.spec.padding;
        let [it, ih, iw] = self.inp;
        let [ot, oh, ow] = self.out;
        let l = self.out_len();
        for c in 0..self.c {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let row = ((c * kt + dt) * kh + dh) * kw + dw;
                        for to in 0..ot {
                            let ti = (to * st + dt) as isize - pt as isize;
                            if ti < 0 || ti >= it as isize {
                                continue;
                            }
                            for ho in 0..oh {
                                let hi = (ho * sh + dh) as isize - ph as isize;
                                if hi < 0 || hi >= ih as isize {
                                    continue;
                                }
                                let src_base = ((c * it + ti as usize) * ih + hi as usize) * iw;
                                let dst_base = row * l + (to * oh + ho) * ow;
                                for wo in 0..ow {
                                    let wi = (wo * sw + dw) as isize - pw as isize;
                                    if wi < 0 || wi >= iw as isize {
                                        continue;
                                    }
                                    f(row, dst_base + wo, src_base + wi as usize);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f32]) -> Vec<f32> {
        let mut cols = vec![0f32; self.patch_len() * self.out_len()];
        self.for_each_tap(|_, dst, src| cols[dst] = x[src]);
        cols
    }

    fn col2im_add(&self, cols: &[f32], dx: &mut [f32]) {
        self.for_each_tap(|_, dst, src| dx[src] += cols[dst]);
    }
}

impl Tensor {
    /// Cross-correlation over `[B, C, T, H, W]` with zero padding.
    /// `weight` is `[O, C, kt, kh, kw]`, `bias` is `[O]`.
    pub fn conv3d(&self, weight: &Tensor, bias: &Tensor, spec: Conv3dSpec) -> Result<Tensor> {
        if self.ndim() != 5 || weight.ndim() != 5 {
            return dim_err(format!(
                "conv3d expects 5-D input and weight, got {:?} and {:?}",
                self.shape(),
                weight.shape()
            ));
        }
        let s = self.shape();
        let ws = weight.shape();
        let (batch, c) = (s[0], s[1]);
        let o = ws[0];
        if ws[1] != c || ws[2..] != spec.kernel {
            return dim_err(format!(
                "conv3d: weight {ws:?} does not match {c} input channels and kernel {:?}",
                spec.kernel
            ));
        }
        if bias.shape() != [o] {
            return dim_err(format!("conv3d: bias {:?} must be [{o}]", bias.shape()));
        }
        let inp = [s[2], s[3], s[4]];
        let out = spec.output_dims(inp)?;
        let geo = Geometry { c, inp, out, spec };
        let (pl, l, il) = (geo.patch_len(), geo.out_len(), geo.in_len());

        let mut y = vec![0f32; batch * o * l];
        for b in 0..batch {
            let cols = geo.im2col(&self.data()[b * il..(b + 1) * il]);
            let yb = &mut y[b * o * l..(b + 1) * o * l];
            gemm(weight.data(), &cols, yb, o, pl, l, false);
            for (oc, chunk) in yb.chunks_mut(l).enumerate() {
                let bv = bias.data()[oc];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }

        Ok(Tensor::from_op(
            vec![batch, o, out[0], out[1], out[2]],
            y,
            vec![self.clone(), weight.clone(), bias.clone()],
            Box::new(move |g, _, p| {
                let (x, w) = (&p[0], &p[1]);
                let mut gx = x.requires_grad().then(|| vec![0f32; batch * il]);
                let mut gw = w.requires_grad().then(|| vec![0f32; o * pl]);
                let gb = p[2].requires_grad().then(|| {
                    let mut acc = vec![0f64; o];
                    for b in 0..batch {
                        for (oc, chunk) in g[b * o * l..(b + 1) * o * l].chunks(l).enumerate() {
                            acc[oc] += chunk.iter().map(|&v| v as f64).sum::<f64>();
                        }
                    }
                    acc.into_iter().map(|v| v as f32).collect()
                });
                for b in 0..batch {
                    let gb_out = &g[b * o * l..(b + 1) * o * l];
                    if let Some(gw) = gw.as_mut() {
                        let cols = geo.im2col(&x.data()[b * il..(b + 1) * il]);
                        gemm_view(View::rows(gb_out, l), View::transposed(&cols, l), gw, o, l, pl, true);
                    }
                    if let Some(gx) = gx.as_mut() {
                        let mut dcols = vec![0f32; pl * l];
                        gemm_view(View::transposed(w.data(), pl), View::rows(gb_out, l), &mut dcols, pl, o, l, false);
                        geo.col2im_add(&dcols, &mut gx[b * il..(b + 1) * il]);
                    }
                }
                vec![gx, gw, gb]
            }),
        ))
    }

    /// Nearest-neighbour 2× upsampling of the last two axes.
    pub fn upsample_nearest2x(&self) -> Result<Tensor> {
        if self.ndim() < 2 {
            return dim_err(format!("upsample needs rank >= 2, got {:?}", self.shape()));
        }
        let nd = self.ndim();
        let (h, w) = (self.shape()[nd - 2], self.shape()[nd - 1]);
        let planes = self.numel() / (h * w);
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![0f32; planes * h2 * w2];
        for p in 0..planes {
            let src = &self.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
            for i in 0..h2 {
                for j in 0..w2 {
                    dst[i * w2 + j] = src[(i / 2) * w + j / 2];
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape[nd - 2] = h2;
        shape[nd - 1] = w2;
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![0f32; planes * h * w];
                for p in 0..planes {
                    let src = &g[p * h2 * w2..(p + 1) * h2 * w2];
                    let dst = &mut gx[p * h * w..(p + 1) * h * w];
                    for i in 0..h2 {
                        for j in 0..w2 {
                            dst[(i / 2) * w + j / 2] += src[i * w2 + j];
                        }
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

    #[test]
    fn output_dims_formula() {
        let spec = Conv3dSpec::new([2, 16, 16], [2, 16, 16], [0, 0, 0]);
        assert_eq!(spec.output_dims([20, 224, 224]).unwrap(), [10, 14, 14]);
        let spec = Conv3dSpec::new([3, 1, 1], [2, 1, 1], [1, 0, 0]);
        assert_eq!(spec.output_dims([10, 14, 14]).unwrap(), [5, 14, 14]);
        let spec = Conv3dSpec::new([3, 3, 3], [1, 1, 1], [0, 0, 0]);
        assert!(spec.output_dims([2, 5, 5]).is_err());
    }

    #[test]
    fn unit_kernel_is_identity() {
        let x = Tensor::full(&[1, 1, 3, 3, 3], 1.0);
        let w = Tensor::full(&[1, 1, 1, 1, 1], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = x.conv3d(&w, &b, Conv3dSpec::new([1, 1, 1], [1, 1, 1], [0, 0, 0])).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn padding_counts_only_real_taps() {
        // 3x3 all-ones kernel over an all-ones 3x3 image with padding 1.
        let x = Tensor::full(&[1, 1, 1, 3, 3], 1.0);
        let w = Tensor::full(&[1, 1, 1, 3, 3], 1.0);
        let y = x
            .conv3d(&w, &Tensor::zeros(&[1]), Conv3dSpec::new([1, 3, 3], [1, 1, 1], [0, 1, 1]))
            .unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn upsample_twice_14_to_56() {
        let x = Tensor::zeros(&[2, 3, 14, 14]);
        let y = x.upsample_nearest2x().unwrap();
        assert_eq!(y.shape(), &[2, 3, 28, 28]);
        assert_eq!(y.upsample_nearest2x().unwrap().shape(), &[2, 3, 56, 56]);
    }
}
