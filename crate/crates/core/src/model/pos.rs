/// 1-D sin-cos table `[n, dim]`: column `2i` is `sin(p·ω_i)`, column `2i+1`
/// is `cos(p·ω_i)`, with `ω_i = 10000^(-2i/dim)`.
fn sincos_1d(n: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * dim];
    for p in 0..n {
        for i in 0..dim / 2 {
            let omega = 10000f64.powf(-(2.0 * i as f64) / dim as f64);
            let a = p as f64 * omega;
            out[p * dim + 2 * i] = a.sin();
            out[p * dim + 2 * i + 1] = a.cos();
        }
    }
    out
}

/// Fixed separable position table `[t·h·w, dim]` in `(t, h, w)` token order.
///
/// The two spatial axes get `2·⌊dim/6⌋` columns each and time takes the rest,
/// laid out as `[time | row | col]`. `dim` must be even and at least 6.
pub fn sincos_3d(grid: [usize; 3], dim: usize) -> Vec<f32> {
    assert!(dim >= 6 && dim % 2 == 0, "sincos_3d needs an even dim >= 6, got {dim}");
    let ds = 2 * (dim / 6);
    let dt = dim - 2 * ds;
    let [nt, nh, nw] = grid;
    let et = sincos_1d(nt, dt);
    let eh = sincos_1d(nh, ds);
    let ew = sincos_1d(nw, ds);
    let mut out = Vec::with_capacity(nt * nh * nw * dim);
    for t in 0..nt {
        for h in 0..nh {
            for w in 0..nw {
                out.extend(et[t * dt..(t + 1) * dt].iter().map(|&v| v as f32));
                out.extend(eh[h * ds..(h + 1) * ds].iter().map(|&v| v as f32));
                out.extend(ew[w * ds..(w + 1) * ds].iter().map(|&v| v as f32));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_origin() {
        let e = sincos_3d([10, 14, 14], 384);
        assert_eq!(e.len(), 1960 * 384);
        // token 0: every sin column is 0, every cos column is 1
        for (c, v) in e[..384].iter().enumerate() {
            assert_eq!(*v, if c % 2 == 0 { 0.0 } else { 1.0 });
        }
        // distinct tokens get distinct codes
        assert_ne!(&e[384..768], &e[768..1152]);
    }

    #[test]
    fn odd_split_dims() {
        // dim 64: spatial 20 each, time 24
        let e = sincos_3d([2, 1, 1], 64);
        let t1 = &e[64..128];
        assert!((t1[0] - 1f32.sin()).abs() < 1e-6);
        assert_eq!(t1[24], 0.0);
    }
}
