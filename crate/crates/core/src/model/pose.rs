use maepose_tensor::{Conv3dSpec, Tensor, TensorError};

use super::layers::Bound;
use super::ModelConfig;
use crate::dsp::{JOINTS, TARGET_FRAMES};
use crate::error::{Error, Result};
use crate::scene::SKELETON_EDGES;

const OUT_FRAMES: usize = TARGET_FRAMES.len();

/// `[B, N, D]` tokens → `[B, D, t, h, w]` volume.
fn to_volume(cfg: &ModelConfig, features: &Tensor) -> Result<Tensor> {
    let s = features.shape();
    if s.len() != 3 || s[1] != cfg.num_tokens() || s[2] != cfg.embed_dim {
        return Err(Error::Tensor(TensorError::Dimension(format!(
            "pose decoder expects [B, {}, {}] features, got {s:?}",
            cfg.num_tokens(),
            cfg.embed_dim
        ))));
    }
    let [t, h, w] = cfg.grid();
    Ok(features.transpose(1, 2)?.reshape(&[s[0], cfg.embed_dim, t, h, w])?)
}

/// Multi-frame heatmap decoder, `[B, N, D]` → `[B, 5, 13, 4h, 4w]`.
///
/// Temporal conv `(3,1,1)/(2,1,1)/(1,0,0)` halves time to five steps, then
/// two rounds of nearest 2× upsampling, a `1×3×3` conv and GELU, and a
/// `1×1×1` conv to one channel per joint.
pub fn decode_heatmaps(cfg: &ModelConfig, p: &Bound, features: &Tensor) -> Result<Tensor> {
    let x = to_volume(cfg, features)?;
    let conv = |x: &Tensor, name: &str, spec: Conv3dSpec| -> Result<Tensor> {
        Ok(x.conv3d(p.get(&format!("{name}.weight"))?, p.get(&format!("{name}.bias"))?, spec)?)
    };
    let x = conv(&x, "head.heatmap.conv_t", Conv3dSpec::new([3, 1, 1], [2, 1, 1], [1, 0, 0]))?;
    let spatial = Conv3dSpec::new([1, 3, 3], [1, 1, 1], [0, 1, 1]);
    let x = conv(&x.upsample_nearest2x()?, "head.heatmap.up1", spatial)?.gelu();
    let x = conv(&x.upsample_nearest2x()?, "head.heatmap.up2", spatial)?.gelu();
    let x = conv(&x, "head.heatmap.out", Conv3dSpec::new([1, 1, 1], [1, 1, 1], [0, 0, 0]))?;
    // [B, K, F, S, S] → [B, F, K, S, S]
    Ok(x.permute(&[0, 2, 1, 3, 4])?)
}

/// Gaussian targets and the number of label coordinates that had to be
/// clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub data: Vec<f32>,
    pub clamped: usize,
}

/// One unnormalised Gaussian per label `(x, y)`, centred at
/// `(u, v) = (y·rows, x·cols)`:
/// `exp(−((i − u)² + (j − v)²) / (2σ²))`. With `σ <= 0` the map is a single
/// one at the nearest cell. `labels` is `[.., 2]`; the output is
/// `[.., rows, cols]`.
pub fn gaussian_targets(labels: &[f32], sigma: f64, rows: usize, cols: usize) -> Targets {
    let mut clamped = 0;
    let mut data = vec![0f32; labels.len() / 2 * rows * cols];
    for (k, xy) in labels.chunks_exact(2).enumerate() {
        let mut c = [xy[0] as f64, xy[1] as f64];
        for v in &mut c {
            if !(0.0..=1.0).contains(v) {
                clamped += 1;
                *v = v.clamp(0.0, 1.0);
            }
        }
        let u = c[1] * rows as f64;
        let v = c[0] * cols as f64;
        let map = &mut data[k * rows * cols..(k + 1) * rows * cols];
        if sigma <= 0.0 {
            let i = (u.round() as usize).min(rows - 1);
            let j = (v.round() as usize).min(cols - 1);
            map[i * cols + j] = 1.0;
            continue;
        }
        let inv = 1.0 / (2.0 * sigma * sigma);
        for i in 0..rows {
            let di = (i as f64 - u).powi(2);
            for j in 0..cols {
                map[i * cols + j] = (-(di + (j as f64 - v).powi(2)) * inv).exp() as f32;
            }
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} label coordinates outside [0, 1] were clamped");
    }
    Targets { data, clamped }
}

/// `mean(w · (pred − target)²)` with `w = fg_weight` where `target > 0.01`
/// and 1 elsewhere.
pub fn heatmap_loss(pred: &Tensor, target: &Tensor, fg_weight: f64) -> Result<Tensor> {
    let w: Vec<f32> = target
        .data()
        .iter()
        .map(|&t| if t > 0.01 { fg_weight as f32 } else { 1.0 })
        .collect();
    let w = Tensor::new(target.shape(), w)?;
    let diff = pred.sub(target)?;
    Ok(diff.mul(&diff)?.mul(&w)?.mean())
}

/// Argmax decoding of `[.., rows, cols]` maps into `[.., 2]` coordinates
/// `(x̂, ŷ) = (v̂ / cols, û / rows)`. Ties go to the first cell in row-major
/// order.
pub fn heatmaps_to_skeleton(maps: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(maps.len() / (rows * cols) * 2);
    for m in maps.chunks_exact(rows * cols) {
        let mut best = 0;
        for (i, &v) in m.iter().enumerate() {
            if v > m[best] {
                best = i;
            }
        }
        let (u, v) = (best / cols, best % cols);
        out.push(v as f32 / cols as f32);
        out.push(u as f32 / rows as f32);
    }
    out
}

/// Spatial mean per temporal token group, then adjacent pairs averaged:
/// `[B, N, D]` → `[B, 5, D]`.
fn pool_frames(cfg: &ModelConfig, features: &Tensor) -> Result<Tensor> {
    let b = features.shape()[0];
    let [t, h, w] = cfg.grid();
    let d = cfg.embed_dim;
    if features.shape() != [b, t * h * w, d] {
        return Err(Error::Tensor(TensorError::Dimension(format!(
            "head expects [B, {}, {d}] features, got {:?}",
            t * h * w,
            features.shape()
        ))));
    }
    let x = features.reshape(&[b, t, h * w, d])?.mean_axis(2)?;
    Ok(x.reshape(&[b, t / 2, 2, d])?.mean_axis(2)?)
}

/// Direct regression head: two GELU hidden layers, sigmoid output
/// `[B, 5, 13, 2]`.
pub fn mlp_head(cfg: &ModelConfig, p: &Bound, features: &Tensor) -> Result<Tensor> {
    let b = features.shape()[0];
    let x = pool_frames(cfg, features)?;
    let x = p.linear(&x, "head.mlp.fc1")?.gelu();
    let x = p.linear(&x, "head.mlp.fc2")?.gelu();
    let x = p.linear(&x, "head.mlp.fc3")?.sigmoid();
    Ok(x.reshape(&[b, OUT_FRAMES, JOINTS, 2])?)
}

/// `D^{-1/2} (A + I) D^{-1/2}` for an undirected edge list, row-major.
pub fn normalized_adjacency(edges: &[(usize, usize)], n: usize) -> Vec<f32> {
    let mut a = vec![0f64; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for &(i, j) in edges {
        a[i * n + j] = 1.0;
        a[j * n + i] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum()).collect();
    let mut out = vec![0f32; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (a[i * n + j] / (deg[i] * deg[j]).sqrt()) as f32;
        }
    }
    out
}

pub fn skeleton_adjacency() -> Vec<f32> {
    normalized_adjacency(&SKELETON_EDGES, JOINTS)
}

/// Graph head over the skeleton tree.
pub fn gcn_head(cfg: &ModelConfig, p: &Bound, features: &Tensor) -> Result<Tensor> {
    gcn_head_with(cfg, p, features, &skeleton_adjacency())
}

/// Graph head with an explicit normalised `[13, 13]` adjacency.
pub fn gcn_head_with(cfg: &ModelConfig, p: &Bound, features: &Tensor, adjacency: &[f32]) -> Result<Tensor> {
    let b = features.shape()[0];
    let g = cfg.gcn_hidden;
    let adj = Tensor::new(&[JOINTS, JOINTS], adjacency.to_vec())?;
    let x = pool_frames(cfg, features)?;
    let mut h = p.linear(&x, "head.gcn.lift")?.reshape(&[b, OUT_FRAMES, JOINTS, g])?;
    for layer in ["head.gcn.layer1", "head.gcn.layer2"] {
        h = p.linear(&adj.matmul(&h)?, layer)?.gelu();
    }
    Ok(p.linear(&h, "head.gcn.out")?.sigmoid())
}

/// Mean squared coordinate error for the regression heads.
pub fn coord_loss(pred: &Tensor, labels: &Tensor) -> Result<Tensor> {
    let diff = pred.sub(labels)?;
    Ok(diff.mul(&diff)?.mean())
}
