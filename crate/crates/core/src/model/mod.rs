//! The MAEPose network: 3-D patch embedding, ViT encoder, masked
//! reconstruction decoder, multi-frame heatmap decoder, the MLP/GCN ablation
//! heads and optional RD/RA fusion.
//!
//! Parameters live in a [`ParamStore`] keyed by dotted names. A forward pass
//! binds the store into graph leaves ([`Bound`]) and calls the free functions
//! of this module with them.

mod layers;
mod mae;
mod params;
mod pose;
mod pos;

use serde::{Deserialize, Serialize};

use crate::dsp::{JOINTS, TARGET_FRAMES};
use crate::error::{Error, Result};

pub use layers::Bound;
pub use mae::{
    clip_batch, embed_patches, encode, fuse_dual, patchify, reconstruct, recon_loss, sample_mask, MaskPlan,
};
pub use params::{Checkpoint, Param, ParamStore, Parts};
pub use pose::{
    coord_loss, decode_heatmaps, gaussian_targets, gcn_head, gcn_head_with, heatmap_loss, heatmaps_to_skeleton,
    mlp_head, normalized_adjacency, skeleton_adjacency, Targets,
};
pub use pos::sincos_3d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Heatmap,
    Mlp,
    Gcn,
}

impl std::str::FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heatmap" => Ok(Head::Heatmap),
            "mlp" => Ok(Head::Mlp),
            "gcn" => Ok(Head::Gcn),
            other => Err(Error::Config(format!("unknown head {other:?} (heatmap, mlp or gcn)"))),
        }
    }
}

impl Head {
    pub fn as_str(self) -> &'static str {
        match self {
            Head::Heatmap => "heatmap",
            Head::Mlp => "mlp",
            Head::Gcn => "gcn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// `(t, h, w)` patch size; also the embedding conv kernel and stride.
    pub patch: [usize; 3],
    pub embed_dim: usize,
    pub encoder_depth: usize,
    pub encoder_heads: usize,
    pub mlp_ratio: usize,
    pub decoder_depth: usize,
    pub decoder_dim: usize,
    pub decoder_heads: usize,
    pub mask_ratio: f64,
    /// Hidden channels of the heatmap decoder.
    pub pose_channels: [usize; 3],
    /// Gaussian target width in heatmap pixels; `<= 0` gives one hot pixel.
    pub heatmap_sigma: f64,
    pub fg_weight: f64,
    /// Normalise reconstruction targets per patch.
    pub norm_pix_loss: bool,
    /// Width of the MLP head's hidden layers.
    pub mlp_hidden: usize,
    /// Per-joint feature width of the GCN head.
    pub gcn_hidden: usize,
    pub dual_stream: bool,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frames: 20,
            height: 224,
            width: 224,
            patch: [2, 16, 16],
            embed_dim: 384,
            encoder_depth: 12,
            encoder_heads: 6,
            mlp_ratio: 4,
            decoder_depth: 4,
            decoder_dim: 512,
            decoder_heads: 16,
            mask_ratio: 0.9,
            pose_channels: [256, 128, 64],
            heatmap_sigma: 2.0,
            fg_weight: 10.0,
            norm_pix_loss: false,
            mlp_hidden: 512,
            gcn_hidden: 64,
            dual_stream: false,
            ln_eps: 1e-6,
        }
    }
}

impl ModelConfig {
    /// Token grid `(t, h, w)`.
    pub fn grid(&self) -> [usize; 3] {
        [self.frames / self.patch[0], self.height / self.patch[1], self.width / self.patch[2]]
    }

    pub fn num_tokens(&self) -> usize {
        self.grid().iter().product()
    }

    pub fn patch_pixels(&self) -> usize {
        self.patch.iter().product()
    }

    /// Heatmap `(rows, cols)`: the spatial grid upsampled twice.
    pub fn heatmap_size(&self) -> (usize, usize) {
        let g = self.grid();
        (4 * g[1], 4 * g[2])
    }

    pub fn num_masked(&self) -> usize {
        (self.mask_ratio * self.num_tokens() as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch.contains(&0) {
            return bad("model.patch entries must be positive".into());
        }
        if self.frames % self.patch[0] != 0 || self.height % self.patch[1] != 0 || self.width % self.patch[2] != 0 {
            return bad(format!(
                "input {}x{}x{} is not divisible by patch {:?}",
                self.frames, self.height, self.width, self.patch
            ));
        }
        if self.frames != crate::dsp::CLIP_FRAMES {
            return bad(format!("model.frames must be {}", crate::dsp::CLIP_FRAMES));
        }
        let t = self.grid()[0];
        // temporal conv k=3, s=2, p=1 must land on the labelled frames
        if (t + 2 - 3) / 2 + 1 != TARGET_FRAMES.len() || t % 2 != 0 {
            return bad(format!("token grid has {t} temporal steps; the pose decoder needs 10"));
        }
        for (name, dim, heads) in [
            ("encoder", self.embed_dim, self.encoder_heads),
            ("decoder", self.decoder_dim, self.decoder_heads),
        ] {
            if heads == 0 || dim % heads != 0 {
                return bad(format!("{name} dim {dim} is not divisible by {heads} heads"));
            }
            if dim < 6 || dim % 2 != 0 {
                return bad(format!("{name} dim {dim} must be even and >= 6 for 3-D sin-cos embeddings"));
            }
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return bad(format!("model.mask_ratio must lie in (0, 1), got {}", self.mask_ratio));
        }
        let m = self.num_masked();
        if m == 0 || m == self.num_tokens() {
            return bad(format!("mask ratio {} masks {m} of {} tokens", self.mask_ratio, self.num_tokens()));
        }
        if self.encoder_depth == 0 || self.mlp_ratio == 0 || self.pose_channels.contains(&0) {
            return bad("model depths, mlp_ratio and pose_channels must be positive".into());
        }
        if !(self.fg_weight > 0.0) || !(self.ln_eps > 0.0) {
            return bad("model.fg_weight and model.ln_eps must be positive".into());
        }
        Ok(())
    }

    pub fn joints(&self) -> usize {
        JOINTS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.grid(), [10, 14, 14]);
        assert_eq!(c.num_tokens(), 1960);
        assert_eq!(c.num_masked(), 1764);
        assert_eq!(c.heatmap_size(), (56, 56));
        assert_eq!(c.patch_pixels(), 512);
    }

    #[test]
    fn invalid_configs() {
        let c = ModelConfig { height: 200, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { mask_ratio: 1.0, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { mask_ratio: 1e-4, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { encoder_heads: 5, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { patch: [4, 16, 16], ..ModelConfig::default() };
        assert!(c.validate().is_err());
    }
}
