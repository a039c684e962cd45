//! Self-supervised pre-training and supervised fine-tuning.
//!
//! Both stages use AdamW with a per-step schedule: linear warmup, then cosine
//! decay to zero. Fine-tuning scales each parameter's rate by
//! `layerwise_decay^depth` (see [`ParamStore::lr_depth`]).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use maepose_tensor::Tensor;

use crate::dataset::{assert_no_leak, batches, LopoSplit, Sample};
use crate::dsp::{Modality, JOINTS, TARGET_FRAMES};
use crate::error::{Error, Result};
use crate::eval::mpjpe;
use crate::model::{
    clip_batch, coord_loss, decode_heatmaps, embed_patches, encode, fuse_dual, gaussian_targets, gcn_head,
    heatmap_loss, heatmaps_to_skeleton, mlp_head, reconstruct, recon_loss, sample_mask, Bound, Head, MaskPlan,
    ModelConfig, ParamStore, Parts,
};
use crate::seed;

/// Which spectrogram stream(s) feed the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Input {
    Rd,
    Ra,
    Dual,
}

impl Input {
    pub fn as_str(self) -> &'static str {
        match self {
            Input::Rd => "rd",
            Input::Ra => "ra",
            Input::Dual => "dual",
        }
    }

    /// Modalities a dataset must carry for this input.
    pub fn modalities(self) -> Vec<Modality> {
        match self {
            Input::Rd => vec![Modality::Rd],
            Input::Ra => vec![Modality::Ra],
            Input::Dual => vec![Modality::Rd, Modality::Ra],
        }
    }

    /// The stream whose patches pre-training reconstructs.
    pub fn primary(self) -> Modality {
        match self {
            Input::Ra => Modality::Ra,
            _ => Modality::Rd,
        }
    }
}

impl std::str::FromStr for Input {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rd" => Ok(Input::Rd),
            "ra" => Ok(Input::Ra),
            "dual" => Ok(Input::Dual),
            other => Err(Error::Config(format!("unknown modality {other:?} (rd, ra or dual)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Random,
    Pretrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub layerwise_decay: f64,
    pub early_stop_patience: usize,
    pub betas: [f64; 2],
    pub adam_eps: f64,
    pub init: InitMode,
    pub head: Head,
    pub seed: u64,
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        Self {
            stage: Stage::Pretrain,
            epochs: 100,
            batch_size: 8,
            base_lr: 1.5e-4,
            weight_decay: 0.05,
            warmup_epochs: 5,
            layerwise_decay: 1.0,
            early_stop_patience: 10,
            betas: [0.9, 0.95],
            adam_eps: 1e-8,
            init: InitMode::Random,
            head: Head::Heatmap,
            seed: 42,
        }
    }

    pub fn finetune() -> Self {
        Self {
            stage: Stage::Finetune,
            base_lr: 1e-3,
            layerwise_decay: 0.75,
            betas: [0.9, 0.999],
            init: InitMode::Pretrained,
            ..Self::pretrain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be >= 1");
        }
        if self.early_stop_patience > self.epochs {
            return bad("early_stop_patience must not exceed epochs");
        }
        if !(self.layerwise_decay > 0.0 && self.layerwise_decay <= 1.0) {
            return bad("layerwise_decay must lie in (0, 1]");
        }
        if !(self.base_lr > 0.0 && self.weight_decay >= 0.0 && self.adam_eps > 0.0) {
            return bad("base_lr and adam_eps must be positive, weight_decay non-negative");
        }
        if self.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return bad("betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Learning rate at `step` of `total` (0-based): linear warmup over
/// `warmup` steps, then half-cosine from `base` to zero.
pub fn lr_at(base: f64, step: usize, warmup: usize, total: usize) -> f64 {
    if step < warmup {
        return base * (step + 1) as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1);
    let progress = ((step - warmup) as f64 / span as f64).min(1.0);
    base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Decoupled weight-decay Adam.
pub struct AdamW {
    betas: [f64; 2],
    eps: f64,
    weight_decay: f64,
    t: i32,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamW {
    pub fn new(betas: [f64; 2], eps: f64, weight_decay: f64) -> Self {
        Self { betas, eps, weight_decay, t: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    /// One update; `lr(name)` gives each parameter's rate. Parameters with no
    /// gradient are left alone.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Vec<f32>>, lr: impl Fn(&str) -> f64) {
        self.t += 1;
        let [b1, b2] = self.betas;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (name, p) in store.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let rate = lr(name);
            let wd = if ParamStore::decays(name) { self.weight_decay } else { 0.0 };
            for i in 0..g.len() {
                let gi = g[i] as f64;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                let w = p.data[i] as f64;
                p.data[i] = (w - rate * (update + wd * w)) as f32;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Fine-tuning only.
    pub val_mpjpe: Option<f64>,
    /// Learning rate at the epoch's last step, per layer-wise depth.
    pub lr: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub stage: Stage,
    pub epochs: Vec<EpochRecord>,
    /// Last epoch run (0-based).
    pub stop_epoch: usize,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub best_checkpoint: String,
}

impl TrainLog {
    /// One JSON object per epoch, then a summary line.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let mut line = |v: serde_json::Value| -> Result<()> {
            writeln!(w, "{}", serde_json::to_string(&v)?).map_err(|e| Error::io(path, e))
        };
        for e in &self.epochs {
            let mut v = serde_json::to_value(e)?;
            v["stage"] = serde_json::to_value(self.stage)?;
            line(v)?;
        }
        line(serde_json::json!({
            "stage": self.stage,
            "summary": true,
            "stop_epoch": self.stop_epoch,
            "best_epoch": self.best_epoch,
            "best_metric": self.best_metric,
            "best_checkpoint": self.best_checkpoint,
        }))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Tracks the best metric and decides when patience has run out.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    /// Records an epoch's metric; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> (bool, bool) {
        if metric < self.best {
            self.best = metric;
            self.best_epoch = epoch;
            self.stale = 0;
            (true, false)
        } else {
            self.stale += 1;
            (false, self.patience > 0 && self.stale >= self.patience)
        }
    }
}

/// Encoder input tokens for a batch.
fn tokens(cfg: &ModelConfig, p: &Bound, batch: &[&Sample], input: Input) -> Result<Tensor> {
    match input {
        Input::Rd | Input::Ra => embed_patches(cfg, p, &clip_batch(cfg, batch, input.primary())?, "patch_embed"),
        Input::Dual => {
            if !cfg.dual_stream {
                return Err(Error::Config("dual input needs model.dual_stream = true".into()));
            }
            let rd = embed_patches(cfg, p, &clip_batch(cfg, batch, Modality::Rd)?, "patch_embed")?;
            let ra = embed_patches(cfg, p, &clip_batch(cfg, batch, Modality::Ra)?, "patch_embed_ra")?;
            fuse_dual(cfg, p, &rd, &ra)
        }
    }
}

fn check_input(cfg: &ModelConfig, input: Input) -> Result<()> {
    if cfg.dual_stream != (input == Input::Dual) {
        return Err(Error::Config(format!(
            "modality {} does not match model.dual_stream = {}",
            input.as_str(),
            cfg.dual_stream
        )));
    }
    Ok(())
}

fn finite(loss: f64, stage: &str, epoch: usize, batch: &[&Sample]) -> Result<()> {
    if loss.is_finite() {
        return Ok(());
    }
    let ids: Vec<&str> = batch.iter().map(|s| s.id.as_str()).collect();
    Err(Error::Numeric(format!("{stage} loss {loss} at epoch {epoch} on clips {ids:?}")))
}

fn gather<'a>(samples: &'a [Sample], idx: &[usize]) -> Vec<&'a Sample> {
    idx.iter().map(|&i| &samples[i]).collect()
}

fn plans_for(cfg: &ModelConfig, seed: u64, purpose: &str, epoch: usize, idx: &[usize]) -> Result<Vec<MaskPlan>> {
    idx.iter()
        .map(|&i| {
            let s = seed::derive(seed, purpose, ((epoch as u64) << 32) | i as u64);
            sample_mask(cfg.num_tokens(), cfg.mask_ratio, s)
        })
        .collect()
}

fn steps_per_epoch(n: usize, batch: usize) -> usize {
    n.div_ceil(batch)
}

/// Masked-reconstruction pre-training on the split's train clips; early
/// stopping on validation reconstruction loss with fixed validation masks.
pub fn pretrain(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    samples: &[Sample],
    split: &LopoSplit,
    input: Input,
) -> Result<(ParamStore, TrainLog)> {
    tc.validate()?;
    check_input(cfg, input)?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Config("pre-training needs non-empty train and val sets".into()));
    }
    assert_no_leak(samples, &split.train, split.test_person)?;
    assert_no_leak(samples, &split.val, split.test_person)?;
    let parts = Parts { recon_decoder: true, head: None };
    let mut store = ParamStore::init(cfg, parts, seed::derive(tc.seed, "init-pretrain", 0))?;
    let mut opt = AdamW::new(tc.betas, tc.adam_eps, tc.weight_decay);
    let per_epoch = steps_per_epoch(split.train.len(), tc.batch_size);
    let (warmup, total) = (tc.warmup_epochs * per_epoch, tc.epochs * per_epoch);
    let mut step = 0;
    let mut stopper = EarlyStopper::new(tc.early_stop_patience);
    let mut best = store.clone();
    let mut records = Vec::new();
    let mut stop_epoch = 0;
    let target = input.primary();

    let val_plans = plans_for(cfg, tc.seed, "val-mask", 0, &split.val)?;
    for epoch in 0..tc.epochs {
        let mut rng = seed::rng(tc.seed, "pretrain-batches", epoch as u64);
        let mut sum = 0.0;
        let mut lr = 0.0;
        for idx in batches(&split.train, tc.batch_size, &mut rng) {
            let batch = gather(samples, &idx);
            let plans = plans_for(cfg, tc.seed, "pretrain-mask", epoch, &idx)?;
            let p = Bound::train(&store, cfg.ln_eps)?;
            let x = clip_batch(cfg, &batch, target)?;
            let feats = encode(cfg, &p, &tokens(cfg, &p, &batch, input)?, Some(&plans))?;
            let loss = recon_loss(cfg, &reconstruct(cfg, &p, &feats, &plans)?, &x, &plans)?;
            let l = loss.item() as f64;
            finite(l, "pretrain", epoch, &batch)?;
            loss.backward()?;
            lr = lr_at(tc.base_lr, step, warmup, total);
            opt.step(&mut store, &p.grads(), |_| lr);
            step += 1;
            sum += l * idx.len() as f64;
        }
        let train_loss = sum / split.train.len() as f64;
        let val_loss = recon_eval(cfg, &store, samples, &split.val, &val_plans, input, tc.batch_size)?;
        records.push(EpochRecord { epoch, train_loss, val_loss, val_mpjpe: None, lr: BTreeMap::from([(0, lr)]) });
        log::info!("pretrain epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        stop_epoch = epoch;
        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best = store.clone();
        }
        if stop {
            break;
        }
    }
    let log = TrainLog {
        stage: Stage::Pretrain,
        epochs: records,
        stop_epoch,
        best_epoch: stopper.best_epoch,
        best_metric: stopper.best,
        best_checkpoint: format!("pretrain-epoch{:03}", stopper.best_epoch),
    };
    Ok((best, log))
}

/// Mean reconstruction loss over `idx` with the given masks.
pub fn recon_eval(
    cfg: &ModelConfig,
    store: &ParamStore,
    samples: &[Sample],
    idx: &[usize],
    plans: &[MaskPlan],
    input: Input,
    batch_size: usize,
) -> Result<f64> {
    let p = Bound::frozen(store, cfg.ln_eps)?;
    let mut sum = 0.0;
    for (chunk, pl) in idx.chunks(batch_size).zip(plans.chunks(batch_size)) {
        let batch = gather(samples, chunk);
        let x = clip_batch(cfg, &batch, input.primary())?;
        let feats = encode(cfg, &p, &tokens(cfg, &p, &batch, input)?, Some(pl))?;
        let l = recon_loss(cfg, &reconstruct(cfg, &p, &feats, pl)?, &x, pl)?.item() as f64;
        finite(l, "validation", 0, &batch)?;
        sum += l * chunk.len() as f64;
    }
    Ok(sum / idx.len() as f64)
}

fn labels_tensor(batch: &[&Sample]) -> Result<Tensor> {
    let data: Vec<f32> = batch.iter().flat_map(|s| s.labels.iter().copied()).collect();
    Ok(Tensor::new(&[batch.len(), TARGET_FRAMES.len(), JOINTS, 2], data)?)
}

/// Head output for a batch: heatmaps `[B, 5, 13, R, C]` or coordinates
/// `[B, 5, 13, 2]`.
fn head_forward(cfg: &ModelConfig, p: &Bound, batch: &[&Sample], input: Input, head: Head) -> Result<Tensor> {
    let feats = encode(cfg, p, &tokens(cfg, p, batch, input)?, None)?;
    match head {
        Head::Heatmap => decode_heatmaps(cfg, p, &feats),
        Head::Mlp => mlp_head(cfg, p, &feats),
        Head::Gcn => gcn_head(cfg, p, &feats),
    }
}

fn batch_loss(cfg: &ModelConfig, out: &Tensor, batch: &[&Sample], head: Head) -> Result<Tensor> {
    match head {
        Head::Heatmap => {
            let (r, c) = cfg.heatmap_size();
            let labels: Vec<f32> = batch.iter().flat_map(|s| s.labels.iter().copied()).collect();
            let t = gaussian_targets(&labels, cfg.heatmap_sigma, r, c);
            let target = Tensor::new(out.shape(), t.data)?;
            heatmap_loss(out, &target, cfg.fg_weight)
        }
        Head::Mlp | Head::Gcn => coord_loss(out, &labels_tensor(batch)?),
    }
}

/// Predicted coordinates `[n, 5, 13, 2]` for the clips in `idx`.
pub fn predict(
    cfg: &ModelConfig,
    store: &ParamStore,
    samples: &[Sample],
    idx: &[usize],
    input: Input,
    head: Head,
    batch_size: usize,
) -> Result<Vec<f32>> {
    let p = Bound::frozen(store, cfg.ln_eps)?;
    let mut out = Vec::with_capacity(idx.len() * TARGET_FRAMES.len() * JOINTS * 2);
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch = gather(samples, chunk);
        let y = head_forward(cfg, &p, &batch, input, head)?;
        if y.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite model output".into()));
        }
        match head {
            Head::Heatmap => {
                let (r, c) = cfg.heatmap_size();
                out.extend(heatmaps_to_skeleton(y.data(), r, c));
            }
            _ => out.extend_from_slice(y.data()),
        }
    }
    Ok(out)
}

/// Mean MPJPE (metres) of predictions over the clips in `idx`.
pub fn mean_mpjpe(samples: &[Sample], idx: &[usize], pred: &[f32]) -> Result<f64> {
    let per = TARGET_FRAMES.len() * JOINTS * 2;
    let mut sum = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        sum += mpjpe(&pred[k * per..(k + 1) * per], &samples[i].labels, samples[i].metres_per_unit)?;
    }
    Ok(sum / idx.len() as f64)
}

/// Supervised fine-tuning. With `init`, every embedder/encoder parameter is
/// copied from it and the reconstruction decoder is dropped; the pose head
/// starts fresh either way. Early stopping on validation MPJPE.
pub fn finetune(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    samples: &[Sample],
    split: &LopoSplit,
    input: Input,
    init: Option<&ParamStore>,
) -> Result<(ParamStore, TrainLog)> {
    tc.validate()?;
    check_input(cfg, input)?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Config("fine-tuning needs non-empty train and val sets".into()));
    }
    assert_no_leak(samples, &split.train, split.test_person)?;
    assert_no_leak(samples, &split.val, split.test_person)?;
    let head = tc.head;
    let parts = Parts { recon_decoder: false, head: Some(head) };
    let mut store = ParamStore::init(cfg, parts, seed::derive(tc.seed, "init-finetune", 0))?;
    match (tc.init, init) {
        (InitMode::Pretrained, Some(src)) => {
            let backbone = store.names().filter(|n| !n.starts_with("head.")).count();
            let copied = store.load_from(src)?;
            if copied != backbone {
                return Err(Error::Config(format!(
                    "checkpoint supplies {copied} of {backbone} backbone parameters"
                )));
            }
        }
        (InitMode::Pretrained, None) => {
            return Err(Error::Config("init = pretrained needs a pre-trained checkpoint".into()))
        }
        (InitMode::Random, _) => {}
    }

    let depth = cfg.encoder_depth;
    let mut opt = AdamW::new(tc.betas, tc.adam_eps, tc.weight_decay);
    let per_epoch = steps_per_epoch(split.train.len(), tc.batch_size);
    let (warmup, total) = (tc.warmup_epochs * per_epoch, tc.epochs * per_epoch);
    let scale: Vec<f64> = (0..=depth + 1).map(|d| tc.layerwise_decay.powi(d as i32)).collect();
    let mut step = 0;
    let mut stopper = EarlyStopper::new(tc.early_stop_patience);
    let mut best = store.clone();
    let mut records = Vec::new();
    let mut stop_epoch = 0;

    for epoch in 0..tc.epochs {
        let mut rng = seed::rng(tc.seed, "finetune-batches", epoch as u64);
        let mut sum = 0.0;
        let mut lr = 0.0;
        for idx in batches(&split.train, tc.batch_size, &mut rng) {
            let batch = gather(samples, &idx);
            let p = Bound::train(&store, cfg.ln_eps)?;
            let out = head_forward(cfg, &p, &batch, input, head)?;
            let loss = batch_loss(cfg, &out, &batch, head)?;
            let l = loss.item() as f64;
            finite(l, "finetune", epoch, &batch)?;
            loss.backward()?;
            lr = lr_at(tc.base_lr, step, warmup, total);
            opt.step(&mut store, &p.grads(), |name| lr * scale[ParamStore::lr_depth(name, depth)]);
            step += 1;
            sum += l * idx.len() as f64;
        }
        let train_loss = sum / split.train.len() as f64;
        let (val_loss, val_mpjpe) = finetune_eval(cfg, &store, samples, &split.val, input, head, tc.batch_size)?;
        let lrs = scale.iter().enumerate().map(|(d, s)| (d, lr * s)).collect();
        records.push(EpochRecord { epoch, train_loss, val_loss, val_mpjpe: Some(val_mpjpe), lr: lrs });
        log::info!("finetune epoch {epoch}: train {train_loss:.5} val {val_loss:.5} mpjpe {val_mpjpe:.4}");
        stop_epoch = epoch;
        let (improved, stop) = stopper.observe(epoch, val_mpjpe);
        if improved {
            best = store.clone();
        }
        if stop {
            break;
        }
    }
    let log = TrainLog {
        stage: Stage::Finetune,
        epochs: records,
        stop_epoch,
        best_epoch: stopper.best_epoch,
        best_metric: stopper.best,
        best_checkpoint: format!("finetune-epoch{:03}", stopper.best_epoch),
    };
    Ok((best, log))
}

fn finetune_eval(
    cfg: &ModelConfig,
    store: &ParamStore,
    samples: &[Sample],
    idx: &[usize],
    input: Input,
    head: Head,
    batch_size: usize,
) -> Result<(f64, f64)> {
    let p = Bound::frozen(store, cfg.ln_eps)?;
    let (mut loss, mut err) = (0.0, 0.0);
    for chunk in idx.chunks(batch_size) {
        let batch = gather(samples, chunk);
        let out = head_forward(cfg, &p, &batch, input, head)?;
        let l = batch_loss(cfg, &out, &batch, head)?.item() as f64;
        finite(l, "validation", 0, &batch)?;
        loss += l * chunk.len() as f64;
        let coords = match head {
            Head::Heatmap => {
                let (r, c) = cfg.heatmap_size();
                heatmaps_to_skeleton(out.data(), r, c)
            }
            _ => out.to_vec(),
        };
        err += mean_mpjpe(samples, chunk, &coords)? * chunk.len() as f64;
    }
    Ok((loss / idx.len() as f64, err / idx.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        assert!((lr_at(1.0, 0, 4, 20) - 0.25).abs() < 1e-12);
        assert!((lr_at(1.0, 3, 4, 20) - 1.0).abs() < 1e-12);
        assert!((lr_at(1.0, 4, 4, 20) - 1.0).abs() < 1e-12);
        assert!((lr_at(1.0, 12, 4, 20) - 0.5).abs() < 1e-12);
        assert!(lr_at(1.0, 19, 4, 20) < 0.01);
        assert_eq!(lr_at(2.0, 7, 0, 10), lr_at(2.0, 7, 0, 10));
    }

    #[test]
    fn layerwise_scales() {
        let tc = TrainConfig { layerwise_decay: 0.75, ..TrainConfig::finetune() };
        let depth = 12;
        let lr = |name: &str| tc.base_lr * tc.layerwise_decay.powi(ParamStore::lr_depth(name, depth) as i32);
        assert!((lr("patch_embed.weight") - 1e-3 * 0.75f64.powi(13)).abs() < 1e-15);
        assert_eq!(lr("head.heatmap.out.weight"), 1e-3);
        let flat = TrainConfig { layerwise_decay: 1.0, ..tc };
        let lr1 = |name: &str| flat.base_lr * flat.layerwise_decay.powi(ParamStore::lr_depth(name, depth) as i32);
        assert_eq!(lr1("patch_embed.weight"), lr1("head.mlp.fc1.weight"));
    }

    #[test]
    fn adamw_first_step_and_decay_mask() {
        use crate::model::Param;
        let mut store = ParamStore::default();
        store.insert("a.weight", Param { shape: vec![2], data: vec![1.0, -1.0] });
        store.insert("a.bias", Param { shape: vec![2], data: vec![1.0, -1.0] });
        let grads = BTreeMap::from([
            ("a.weight".to_string(), vec![0.5, -2.0]),
            ("a.bias".to_string(), vec![0.5, -2.0]),
        ]);
        let mut opt = AdamW::new([0.9, 0.999], 1e-8, 0.1);
        opt.step(&mut store, &grads, |_| 0.01);
        // first Adam step moves by lr·sign(g); decay only on the weight
        let w = &store.get("a.weight").unwrap().data;
        let b = &store.get("a.bias").unwrap().data;
        assert!((w[0] - (1.0 - 0.01 * (1.0 + 0.1))).abs() < 1e-6);
        assert!((w[1] - (-1.0 + 0.01 * (1.0 + 0.1))).abs() < 1e-6);
        assert!((b[0] - 0.99).abs() < 1e-6);
        assert!((b[1] + 0.99).abs() < 1e-6);
    }

    #[test]
    fn early_stopping_patience() {
        let mut s = EarlyStopper::new(3);
        assert_eq!(s.observe(0, 1.0), (true, false));
        assert_eq!(s.observe(1, 0.5), (true, false));
        assert_eq!(s.observe(2, 0.6), (false, false));
        assert_eq!(s.observe(3, 0.5), (false, false));
        assert_eq!(s.observe(4, 0.7), (false, true));
        assert_eq!((s.best, s.best_epoch), (0.5, 1));
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig { early_stop_patience: 200, ..TrainConfig::pretrain() }.validate().is_err());
        assert!(TrainConfig { layerwise_decay: 0.0, ..TrainConfig::finetune() }.validate().is_err());
        TrainConfig::pretrain().validate().unwrap();
        TrainConfig::finetune().validate().unwrap();
    }
}
