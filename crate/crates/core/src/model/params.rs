use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use maepose_tensor::io::{read_raw, write_raw};

use super::{Head, ModelConfig};
use crate::dsp::JOINTS;
use crate::error::{Error, Result};
use crate::seed;

/// Which optional parameter groups a store carries. The encoder (and, in
/// dual-stream mode, the second embedder and fusion block) is always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parts {
    pub recon_decoder: bool,
    pub head: Option<Head>,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    /// Uniform Glorot with the given fans.
    Xavier(usize, usize),
    Normal(f64),
}

struct Spec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn push_linear(out: &mut Vec<Spec>, name: &str, din: usize, dout: usize) {
    out.push(Spec { name: format!("{name}.weight"), shape: vec![din, dout], init: Init::Xavier(din, dout) });
    out.push(Spec { name: format!("{name}.bias"), shape: vec![dout], init: Init::Zeros });
}

fn push_norm(out: &mut Vec<Spec>, name: &str, d: usize) {
    out.push(Spec { name: format!("{name}.weight"), shape: vec![d], init: Init::Ones });
    out.push(Spec { name: format!("{name}.bias"), shape: vec![d], init: Init::Zeros });
}

fn push_conv(out: &mut Vec<Spec>, name: &str, cout: usize, cin: usize, k: [usize; 3], init: Option<Init>) {
    let taps: usize = k.iter().product();
    out.push(Spec {
        name: format!("{name}.weight"),
        shape: vec![cout, cin, k[0], k[1], k[2]],
        init: init.unwrap_or(Init::Xavier(cin * taps, cout * taps)),
    });
    out.push(Spec { name: format!("{name}.bias"), shape: vec![cout], init: Init::Zeros });
}

fn push_block(out: &mut Vec<Spec>, prefix: &str, d: usize, ratio: usize) {
    push_norm(out, &format!("{prefix}.norm1"), d);
    push_linear(out, &format!("{prefix}.attn.qkv"), d, 3 * d);
    push_linear(out, &format!("{prefix}.attn.proj"), d, d);
    push_norm(out, &format!("{prefix}.norm2"), d);
    push_linear(out, &format!("{prefix}.mlp.fc1"), d, ratio * d);
    push_linear(out, &format!("{prefix}.mlp.fc2"), ratio * d, d);
}

fn specs(cfg: &ModelConfig, parts: Parts) -> Vec<Spec> {
    let d = cfg.embed_dim;
    let mut out = Vec::new();
    push_conv(&mut out, "patch_embed", d, 1, cfg.patch, Some(Init::Xavier(cfg.patch_pixels(), d)));
    if cfg.dual_stream {
        push_conv(&mut out, "patch_embed_ra", d, 1, cfg.patch, Some(Init::Xavier(cfg.patch_pixels(), d)));
        push_norm(&mut out, "fusion.norm_q", d);
        push_norm(&mut out, "fusion.norm_kv", d);
        push_linear(&mut out, "fusion.q", d, d);
        push_linear(&mut out, "fusion.kv", d, 2 * d);
        // zero projection: fusion starts as the identity on the RD stream
        out.push(Spec { name: "fusion.proj.weight".into(), shape: vec![d, d], init: Init::Zeros });
        out.push(Spec { name: "fusion.proj.bias".into(), shape: vec![d], init: Init::Zeros });
    }
    for i in 0..cfg.encoder_depth {
        push_block(&mut out, &format!("encoder.blocks.{i}"), d, cfg.mlp_ratio);
    }
    push_norm(&mut out, "encoder.norm", d);

    if parts.recon_decoder {
        let dd = cfg.decoder_dim;
        push_linear(&mut out, "decoder.embed", d, dd);
        out.push(Spec { name: "decoder.mask_token".into(), shape: vec![dd], init: Init::Normal(0.02) });
        for i in 0..cfg.decoder_depth {
            push_block(&mut out, &format!("decoder.blocks.{i}"), dd, cfg.mlp_ratio);
        }
        push_norm(&mut out, "decoder.norm", dd);
        push_linear(&mut out, "decoder.pred", dd, cfg.patch_pixels());
    }

    match parts.head {
        Some(Head::Heatmap) => {
            let [c1, c2, c3] = cfg.pose_channels;
            push_conv(&mut out, "head.heatmap.conv_t", c1, d, [3, 1, 1], None);
            push_conv(&mut out, "head.heatmap.up1", c2, c1, [1, 3, 3], None);
            push_conv(&mut out, "head.heatmap.up2", c3, c2, [1, 3, 3], None);
            push_conv(&mut out, "head.heatmap.out", JOINTS, c3, [1, 1, 1], Some(Init::Normal(1e-3)));
        }
        Some(Head::Mlp) => {
            push_linear(&mut out, "head.mlp.fc1", d, cfg.mlp_hidden);
            push_linear(&mut out, "head.mlp.fc2", cfg.mlp_hidden, cfg.mlp_hidden);
            push_linear(&mut out, "head.mlp.fc3", cfg.mlp_hidden, JOINTS * 2);
        }
        Some(Head::Gcn) => {
            let g = cfg.gcn_hidden;
            push_linear(&mut out, "head.gcn.lift", d, JOINTS * g);
            push_linear(&mut out, "head.gcn.layer1", g, g);
            push_linear(&mut out, "head.gcn.layer2", g, g);
            push_linear(&mut out, "head.gcn.out", g, 2);
        }
        None => {}
    }
    out
}

fn init_values(name: &str, n: usize, init: Init, root: u64) -> Vec<f32> {
    let mut rng = seed::rng(root, &format!("init/{name}"), 0);
    match init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::Xavier(fan_in, fan_out) => {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-a..a) as f32).collect()
        }
        Init::Normal(std) => {
            let d = Normal::new(0.0, std).expect("finite std");
            (0..n).map(|_| d.sample(&mut rng) as f32).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Named parameter buffers. Iteration order is the name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    /// Fresh parameters. Each tensor draws from its own stream keyed by the
    /// seed and its name, so adding or dropping a group never changes the
    /// others.
    pub fn init(cfg: &ModelConfig, parts: Parts, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = BTreeMap::new();
        for s in specs(cfg, parts) {
            let n = s.shape.iter().product();
            let data = init_values(&s.name, n, s.init, seed);
            params.insert(s.name, Param { shape: s.shape, data });
        }
        Ok(Self { params })
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, p: Param) {
        self.params.insert(name.into(), p);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    /// Removes every parameter whose name starts with `prefix`.
    pub fn remove_prefix(&mut self, prefix: &str) {
        self.params.retain(|k, _| !k.starts_with(prefix));
    }

    /// Copies parameters from `other` into matching names of `self`; returns
    /// the number copied. Shapes must agree.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<usize> {
        let mut n = 0;
        for (name, p) in self.params.iter_mut() {
            if let Some(src) = other.params.get(name) {
                if src.shape != p.shape {
                    return Err(Error::Config(format!(
                        "parameter {name}: checkpoint shape {:?}, model expects {:?}",
                        src.shape, p.shape
                    )));
                }
                p.data.clone_from(&src.data);
                n += 1;
            }
        }
        Ok(n)
    }

    /// Biases, normalisation parameters and the mask token are exempt from
    /// weight decay.
    pub fn decays(name: &str) -> bool {
        if name.ends_with(".bias") || name == "decoder.mask_token" {
            return false;
        }
        !name.split('.').any(|seg| seg.starts_with("norm"))
    }

    /// Layer-wise LR depth counted from the top: pose head and final norm 0,
    /// encoder block `i` at `depth − i`, embedders and fusion at `depth + 1`.
    pub fn lr_depth(name: &str, encoder_depth: usize) -> usize {
        if name.starts_with("patch_embed") || name.starts_with("fusion.") {
            return encoder_depth + 1;
        }
        if let Some(rest) = name.strip_prefix("encoder.blocks.") {
            let i: usize = rest.split('.').next().and_then(|s| s.parse().ok()).unwrap_or(0);
            return encoder_depth - i;
        }
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointEntry {
    pub file: String,
    pub shape: Vec<usize>,
}

/// On-disk model: `checkpoint.json` plus one `RVT1` file per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub parts: Parts,
    pub params: BTreeMap<String, CheckpointEntry>,
}

const CHECKPOINT_FILE: &str = "checkpoint.json";

impl Checkpoint {
    pub fn save(dir: &Path, cfg: &ModelConfig, parts: Parts, store: &ParamStore) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut params = BTreeMap::new();
        for (name, p) in store.iter() {
            let file = format!("{name}.rvt");
            let path = dir.join(&file);
            let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            write_raw(&mut w, &p.shape, &p.data)?;
            w.flush().map_err(|e| Error::io(&path, e))?;
            params.insert(name.clone(), CheckpointEntry { file, shape: p.shape.clone() });
        }
        let ck = Checkpoint { format_version: 1, config: cfg.clone(), parts, params };
        let path = dir.join(CHECKPOINT_FILE);
        fs::write(&path, serde_json::to_string_pretty(&ck)? + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Loads and verifies every tensor against the shapes the stored config
    /// implies.
    pub fn load(dir: &Path) -> Result<(ModelConfig, Parts, ParamStore)> {
        let path = dir.join(CHECKPOINT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        ck.config.validate()?;
        let expected = specs(&ck.config, ck.parts);
        if expected.len() != ck.params.len() {
            return Err(Error::Config(format!(
                "checkpoint lists {} parameters, config implies {}",
                ck.params.len(),
                expected.len()
            )));
        }
        let mut store = ParamStore::default();
        for s in expected {
            let entry = ck
                .params
                .get(&s.name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {}", s.name)))?;
            let p = dir.join(&entry.file);
            let f = File::open(&p).map_err(|e| Error::io(&p, e))?;
            let (shape, data) = read_raw(BufReader::new(f)).map_err(|e| Error::Corrupt(format!("{}: {e}", p.display())))?;
            if shape != s.shape {
                return Err(Error::Config(format!(
                    "parameter {}: file shape {shape:?}, config implies {:?}",
                    s.name, s.shape
                )));
            }
            store.insert(s.name, Param { shape, data });
        }
        Ok((ck.config, ck.parts, store))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            height: 32,
            width: 32,
            patch: [2, 16, 16],
            embed_dim: 12,
            encoder_depth: 2,
            encoder_heads: 2,
            decoder_depth: 1,
            decoder_dim: 12,
            decoder_heads: 2,
            pose_channels: [8, 8, 8],
            mlp_hidden: 8,
            gcn_hidden: 4,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn init_is_keyed_by_name() {
        let cfg = tiny();
        let a = ParamStore::init(&cfg, Parts { recon_decoder: true, head: None }, 1).unwrap();
        let b = ParamStore::init(&cfg, Parts { recon_decoder: false, head: Some(Head::Gcn) }, 1).unwrap();
        assert_eq!(a.get("encoder.blocks.1.attn.qkv.weight"), b.get("encoder.blocks.1.attn.qkv.weight"));
        assert!(a.get("decoder.mask_token").is_some() && b.get("decoder.mask_token").is_none());
        assert!(b.get("head.gcn.lift.weight").is_some());
        let c = ParamStore::init(&cfg, Parts { recon_decoder: true, head: None }, 2).unwrap();
        assert_ne!(a.get("patch_embed.weight"), c.get("patch_embed.weight"));
    }

    #[test]
    fn decay_and_depth_conventions() {
        assert!(ParamStore::decays("encoder.blocks.0.attn.qkv.weight"));
        assert!(!ParamStore::decays("encoder.blocks.0.attn.qkv.bias"));
        assert!(!ParamStore::decays("encoder.blocks.3.norm1.weight"));
        assert!(!ParamStore::decays("encoder.norm.weight"));
        assert!(!ParamStore::decays("fusion.norm_q.weight"));
        assert!(!ParamStore::decays("decoder.mask_token"));
        assert!(ParamStore::decays("head.heatmap.out.weight"));
        assert_eq!(ParamStore::lr_depth("patch_embed.weight", 12), 13);
        assert_eq!(ParamStore::lr_depth("encoder.blocks.0.mlp.fc1.weight", 12), 12);
        assert_eq!(ParamStore::lr_depth("encoder.blocks.11.norm1.bias", 12), 1);
        assert_eq!(ParamStore::lr_depth("encoder.norm.weight", 12), 0);
        assert_eq!(ParamStore::lr_depth("head.mlp.fc1.weight", 12), 0);
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let cfg = tiny();
        let parts = Parts { recon_decoder: false, head: Some(Head::Heatmap) };
        let store = ParamStore::init(&cfg, parts, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        Checkpoint::save(dir.path(), &cfg, parts, &store).unwrap();
        let (c2, p2, s2) = Checkpoint::load(dir.path()).unwrap();
        assert_eq!((c2, p2, s2), (cfg.clone(), parts, store));

        // tamper with one tensor's shape
        let p = dir.path().join("encoder.norm.weight.rvt");
        let f = File::create(&p).unwrap();
        write_raw(f, &[5], &[1.0; 5]).unwrap();
        assert!(matches!(Checkpoint::load(dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn load_from_checks_shapes() {
        let cfg = tiny();
        let mut a = ParamStore::init(&cfg, Parts { recon_decoder: false, head: Some(Head::Mlp) }, 1).unwrap();
        let b = ParamStore::init(&cfg, Parts { recon_decoder: true, head: None }, 9).unwrap();
        let n = a.load_from(&b).unwrap();
        assert_eq!(n, a.len() - 6);
        assert_eq!(a.get("patch_embed.weight"), b.get("patch_embed.weight"));
        let big = ModelConfig { embed_dim: 24, ..cfg };
        let c = ParamStore::init(&big, Parts { recon_decoder: false, head: None }, 1).unwrap();
        assert!(a.load_from(&c).is_err());
    }
}
