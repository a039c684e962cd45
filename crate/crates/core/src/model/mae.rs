use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use maepose_tensor::{Conv3dSpec, Tensor, TensorError};

use super::layers::{attend, Bound};
use super::pos::sincos_3d;
use super::ModelConfig;
use crate::dataset::Sample;
use crate::dsp::Modality;
use crate::error::{Error, Result};
use crate::seed;

fn dim_error<T>(msg: String) -> Result<T> {
    Err(Error::Tensor(TensorError::Dimension(msg)))
}

/// Stacks one modality of several samples into `[B, 1, T, H, W]`.
pub fn clip_batch(cfg: &ModelConfig, samples: &[&Sample], modality: Modality) -> Result<Tensor> {
    let expect = [cfg.frames, cfg.height, cfg.width];
    let mut data = Vec::with_capacity(samples.len() * expect.iter().product::<usize>());
    for s in samples {
        if s.dims != expect {
            return dim_error(format!("clip {} is {:?}, model expects {:?}", s.id, s.dims, expect));
        }
        data.extend_from_slice(&s.modality(modality)?.data);
    }
    Ok(Tensor::new(&[samples.len(), 1, cfg.frames, cfg.height, cfg.width], data)?)
}

/// Conv patch embedding plus fixed sin-cos positions: `[B, 1, T, H, W]` →
/// `[B, N, D]` in `(t, h, w)` token order. `prefix` selects the embedder
/// (`patch_embed` or `patch_embed_ra`).
pub fn embed_patches(cfg: &ModelConfig, p: &Bound, frames: &Tensor, prefix: &str) -> Result<Tensor> {
    let s = frames.shape();
    if s.len() != 5 || s[1] != 1 || s[2..] != [cfg.frames, cfg.height, cfg.width] {
        return dim_error(format!(
            "embed_patches expects [B, 1, {}, {}, {}], got {s:?}",
            cfg.frames, cfg.height, cfg.width
        ));
    }
    let b = s[0];
    let spec = Conv3dSpec::new(cfg.patch, cfg.patch, [0, 0, 0]);
    let x = frames.conv3d(p.get(&format!("{prefix}.weight"))?, p.get(&format!("{prefix}.bias"))?, spec)?;
    let n = cfg.num_tokens();
    let d = cfg.embed_dim;
    let x = x.reshape(&[b, d, n])?.transpose(1, 2)?;
    let pos = Tensor::new(&[n, d], sincos_3d(cfg.grid(), d))?;
    Ok(x.add_bias(&pos)?)
}

/// Visible and masked token indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub visible: Vec<usize>,
    pub masked: Vec<usize>,
    pub seed: u64,
}

/// Uniform masking without replacement of `round(ratio·n)` tokens.
pub fn sample_mask(n: usize, ratio: f64, seed: u64) -> Result<MaskPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("mask ratio must lie in (0, 1), got {ratio}")));
    }
    let m = (ratio * n as f64).round() as usize;
    if m == 0 || m >= n {
        return Err(Error::Config(format!("mask ratio {ratio} masks {m} of {n} tokens")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, "mask", 0));
    let mut masked = order[..m].to_vec();
    let mut visible = order[m..].to_vec();
    masked.sort_unstable();
    visible.sort_unstable();
    Ok(MaskPlan { visible, masked, seed })
}

/// ViT encoder. With `plans`, only each sample's visible tokens go through
/// the blocks; without, all tokens do.
pub fn encode(cfg: &ModelConfig, p: &Bound, tokens: &Tensor, plans: Option<&[MaskPlan]>) -> Result<Tensor> {
    let mut x = match plans {
        Some(plans) => {
            if plans.len() != tokens.shape()[0] {
                return dim_error(format!("{} mask plans for a batch of {}", plans.len(), tokens.shape()[0]));
            }
            let idx: Vec<Vec<usize>> = plans.iter().map(|pl| pl.visible.clone()).collect();
            tokens.gather_rows(&idx)?
        }
        None => tokens.clone(),
    };
    for i in 0..cfg.encoder_depth {
        x = p.block(&x, &format!("encoder.blocks.{i}"), cfg.encoder_heads)?;
    }
    p.norm(&x, "encoder.norm")
}

/// Reconstruction decoder: returns predicted pixels `[B, M, P]` for the
/// masked tokens of each plan, in the plan's masked order.
pub fn reconstruct(cfg: &ModelConfig, p: &Bound, features: &Tensor, plans: &[MaskPlan]) -> Result<Tensor> {
    let (b, v) = (features.shape()[0], features.shape()[1]);
    let n = cfg.num_tokens();
    let dd = cfg.decoder_dim;
    if plans.len() != b || plans.iter().any(|pl| pl.visible.len() != v || pl.visible.len() + pl.masked.len() != n) {
        return dim_error("reconstruct: mask plans do not match the encoded features".into());
    }
    let m = n - v;
    let x = p.linear(features, "decoder.embed")?;
    let mask = p.get("decoder.mask_token")?.expand_to(&[b, m, dd])?;
    let full = Tensor::concat(&[x, mask], 1)?;
    // row j of `full` holds visible[j] for j < v and masked[j − v] after
    let restore: Vec<Vec<usize>> = plans
        .iter()
        .map(|pl| {
            let mut r = vec![0; n];
            for (j, &t) in pl.visible.iter().enumerate() {
                r[t] = j;
            }
            for (j, &t) in pl.masked.iter().enumerate() {
                r[t] = v + j;
            }
            r
        })
        .collect();
    let pos = Tensor::new(&[n, dd], sincos_3d(cfg.grid(), dd))?;
    let mut x = full.gather_rows(&restore)?.add_bias(&pos)?;
    for i in 0..cfg.decoder_depth {
        x = p.block(&x, &format!("decoder.blocks.{i}"), cfg.decoder_heads)?;
    }
    let x = p.norm(&x, "decoder.norm")?;
    let pred = p.linear(&x, "decoder.pred")?;
    let masked: Vec<Vec<usize>> = plans.iter().map(|pl| pl.masked.clone()).collect();
    Ok(pred.gather_rows(&masked)?)
}

/// Cuts `[B, 1, T, H, W]` into `[B, N, P]` patches; token order `(t, h, w)`,
/// pixel order `(dt, dh, dw)` within a patch (the embedding kernel layout).
pub fn patchify(cfg: &ModelConfig, frames: &[f32], batch: usize) -> Vec<f32> {
    let [pt, ph, pw] = cfg.patch;
    let [gt, gh, gw] = cfg.grid();
    let (h, w) = (cfg.height, cfg.width);
    let clip = cfg.frames * h * w;
    let mut out = Vec::with_capacity(batch * clip);
    for b in 0..batch {
        let x = &frames[b * clip..(b + 1) * clip];
        for ti in 0..gt {
            for hi in 0..gh {
                for wi in 0..gw {
                    for dt in 0..pt {
                        for dh in 0..ph {
                            let row = ((ti * pt + dt) * h + hi * ph + dh) * w + wi * pw;
                            out.extend_from_slice(&x[row..row + pw]);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Mean squared error over masked patches only.
pub fn recon_loss(cfg: &ModelConfig, pred: &Tensor, frames: &Tensor, plans: &[MaskPlan]) -> Result<Tensor> {
    let b = frames.shape()[0];
    let n = cfg.num_tokens();
    let pp = cfg.patch_pixels();
    let mut target = patchify(cfg, frames.data(), b);
    if cfg.norm_pix_loss {
        for patch in target.chunks_mut(pp) {
            let mean = patch.iter().map(|&v| v as f64).sum::<f64>() / pp as f64;
            let var = patch.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / pp as f64;
            let inv = 1.0 / (var + 1e-6).sqrt();
            patch.iter_mut().for_each(|v| *v = ((*v as f64 - mean) * inv) as f32);
        }
    }
    let target = Tensor::new(&[b, n, pp], target)?;
    let masked: Vec<Vec<usize>> = plans.iter().map(|pl| pl.masked.clone()).collect();
    let target = target.gather_rows(&masked)?;
    if pred.shape() != target.shape() {
        return dim_error(format!("recon_loss: prediction {:?} vs target {:?}", pred.shape(), target.shape()));
    }
    let diff = pred.sub(&target)?;
    Ok(diff.mul(&diff)?.mean())
}

/// One residual cross-attention block: RD tokens query RA tokens.
pub fn fuse_dual(cfg: &ModelConfig, p: &Bound, rd: &Tensor, ra: &Tensor) -> Result<Tensor> {
    if rd.shape() != ra.shape() {
        return dim_error(format!("fuse_dual: RD grid {:?} vs RA grid {:?}", rd.shape(), ra.shape()));
    }
    let d = cfg.embed_dim;
    let q = p.linear(&p.norm(rd, "fusion.norm_q")?, "fusion.q")?;
    let kv = p.linear(&p.norm(ra, "fusion.norm_kv")?, "fusion.kv")?;
    let k = kv.slice(2, 0, d)?;
    let v = kv.slice(2, d, d)?;
    let a = attend(&q, &k, &v, cfg.encoder_heads)?;
    Ok(rd.add(&p.linear(&a, "fusion.proj")?)?)
}
