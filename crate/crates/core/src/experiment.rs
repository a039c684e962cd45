//! Experiment configuration and the leave-one-person-out pipeline.
//!
//! Every seed in a run is derived from `ExperimentConfig::seed`: scene
//! simulation uses it directly, splits use `(seed, "lopo-split", person)`,
//! and the two training stages of fold `p` use
//! `derive(seed, "pretrain" | "finetune", p)`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dataset::{make_lopo_splits, ClipKey, Extractor, LopoSplit, Sample};
use crate::dsp::DspConfig;
use crate::error::{Error, Result};
use crate::eval::{mean_std, ActionScore, FoldReport};
use crate::model::{Head, ModelConfig, ParamStore};
use crate::radar::RadarConfig;
use crate::scene::{generate_dataset, SceneConfig};
use crate::seed;
use crate::train::{finetune, predict, pretrain, InitMode, Input, TrainConfig, TrainLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub persons: usize,
    pub actions: usize,
    pub clips_per_action: usize,
    pub interference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LopoConfig {
    pub val_fraction: f64,
    /// Test persons to run; empty means all.
    pub folds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub modality: Input,
    pub radar: RadarConfig,
    pub scene: SceneConfig,
    pub dsp: DspConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub lopo: LopoConfig,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            modality: Input::Rd,
            radar: RadarConfig::default(),
            scene: SceneConfig::default(),
            dsp: DspConfig::default(),
            model: ModelConfig::default(),
            data: DataConfig { persons: 9, actions: 10, clips_per_action: 4, interference: false },
            pretrain: TrainConfig::pretrain(),
            finetune: TrainConfig::finetune(),
            lopo: LopoConfig { val_fraction: 0.1, folds: Vec::new() },
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale protocol: compact radar, 32×32 clips, a four-block
    /// 32-wide encoder, 20 pre-training and 30 fine-tuning epochs.
    pub fn toy() -> Self {
        let base = Self::default();
        Self {
            modality: Input::Ra,
            radar: RadarConfig::compact(),
            model: ModelConfig {
                height: 32,
                width: 32,
                patch: [2, 8, 8],
                embed_dim: 32,
                encoder_depth: 4,
                encoder_heads: 2,
                decoder_depth: 1,
                decoder_dim: 32,
                decoder_heads: 2,
                pose_channels: [32, 16, 16],
                heatmap_sigma: 1.0,
                mlp_hidden: 64,
                gcn_hidden: 16,
                norm_pix_loss: true,
                ..ModelConfig::default()
            },
            data: DataConfig { persons: 9, actions: 4, clips_per_action: 2, interference: false },
            pretrain: TrainConfig { epochs: 20, batch_size: 2, base_lr: 1e-3, warmup_epochs: 2, ..TrainConfig::pretrain() },
            finetune: TrainConfig { epochs: 30, batch_size: 4, warmup_epochs: 2, ..TrainConfig::finetune() },
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.scene.validate(&self.radar)?;
        self.model.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        if self.model.dual_stream != (self.modality == Input::Dual) {
            return Err(Error::Config(format!(
                "modality {} does not match model.dual_stream = {}",
                self.modality.as_str(),
                self.model.dual_stream
            )));
        }
        if self.data.persons < 2 {
            return Err(Error::Config("LOPO needs at least two persons".into()));
        }
        if let Some(p) = self.lopo.folds.iter().find(|p| **p >= self.data.persons) {
            return Err(Error::Config(format!("lopo.folds names person {p}, only {} exist", self.data.persons)));
        }
        Ok(())
    }

    /// Builds a config from defaults, an optional JSON file and `key=value`
    /// overrides with dotted keys (`finetune.head=gcn`), in that order.
    pub fn resolve(base: Self, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(&base)?;
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let layer: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut v, layer);
        }
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_path(&mut v, key, parse_scalar(raw))?;
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// First 8 hex digits of the SHA-256 of the resolved config (without
    /// the output directory).
    pub fn hash8(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let digest = Sha256::digest(serde_json::to_vec(&c)?);
        Ok(digest.iter().take(4).map(|b| format!("{b:02x}")).collect())
    }

    pub fn run_dir(&self) -> Result<PathBuf> {
        Ok(self.out_dir.join(format!("run-{}-s{}", self.hash8()?, self.seed)))
    }

    /// Short arm label, e.g. `rd-heatmap-pretrained`.
    pub fn label(&self) -> String {
        let init = match self.finetune.init {
            InitMode::Pretrained => "pretrained",
            InitMode::Random => "random",
        };
        format!("{}-{}-{init}", self.modality.as_str(), self.finetune.head.as_str())
    }
}

fn merge(dst: &mut Value, src: Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                match d.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        d.insert(k, v);
                    }
                }
            }
        }
        (d, s) => *d = s,
    }
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(v: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = v;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {part} is not a section")))?;
        if i + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(Error::Config(format!("unknown config key {key}")));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.get_mut(*part).ok_or_else(|| Error::Config(format!("unknown config key {key}")))?;
    }
    Ok(())
}

/// Simulates and extracts the configured dataset in memory.
pub fn build_samples(cfg: &ExperimentConfig, interference: bool) -> Result<Vec<Sample>> {
    let d = &cfg.data;
    let scenes = generate_dataset(
        d.persons,
        d.actions,
        d.clips_per_action,
        interference,
        cfg.seed,
        &cfg.radar,
        &cfg.scene,
    )?;
    let extractor = cfg_extractor(cfg)?;
    scenes
        .iter()
        .map(|s| extractor.from_scene(s, &cfg.radar, &cfg.scene, cfg.seed))
        .collect()
}

pub fn cfg_extractor(cfg: &ExperimentConfig) -> Result<Extractor> {
    Extractor::new(&cfg.radar, &cfg.dsp, (cfg.model.height, cfg.model.width), &cfg.modality.modalities())
}

/// All splits, or only the configured folds.
pub fn splits_for(cfg: &ExperimentConfig, samples: &[Sample]) -> Result<Vec<LopoSplit>> {
    let keys: Vec<ClipKey> = samples.iter().map(Sample::key).collect();
    let all = make_lopo_splits(&keys, cfg.lopo.val_fraction, cfg.seed)?;
    if cfg.lopo.folds.is_empty() {
        return Ok(all);
    }
    Ok(all.into_iter().filter(|s| cfg.lopo.folds.contains(&s.test_person)).collect())
}

fn stage_config(tc: &TrainConfig, root: u64, stage: &str, fold: usize) -> TrainConfig {
    TrainConfig { seed: seed::derive(root, stage, fold as u64), ..tc.clone() }
}

/// Pre-trains on one fold's train/val clips.
pub fn pretrain_fold(cfg: &ExperimentConfig, samples: &[Sample], split: &LopoSplit) -> Result<(ParamStore, TrainLog)> {
    let tc = stage_config(&cfg.pretrain, cfg.seed, "pretrain", split.test_person);
    pretrain(&cfg.model, &tc, samples, split, cfg.modality)
}

/// Fine-tunes one fold with `head` and `init`, ignoring the corresponding
/// fields of `cfg.finetune`. Arms that differ only in head or init share
/// the fold's seed.
pub fn finetune_fold(
    cfg: &ExperimentConfig,
    samples: &[Sample],
    split: &LopoSplit,
    head: Head,
    init: Option<&ParamStore>,
) -> Result<(ParamStore, TrainLog)> {
    let mode = if init.is_some() { InitMode::Pretrained } else { InitMode::Random };
    let tc = TrainConfig { head, init: mode, ..stage_config(&cfg.finetune, cfg.seed, "finetune", split.test_person) };
    finetune(&cfg.model, &tc, samples, split, cfg.modality, init)
}

/// Scores a fine-tuned model on the fold's test person.
pub fn evaluate_fold(
    cfg: &ExperimentConfig,
    store: &ParamStore,
    head: Head,
    samples: &[Sample],
    split: &LopoSplit,
) -> Result<FoldReport> {
    let pred = predict(&cfg.model, store, samples, &split.test, cfg.modality, head, cfg.finetune.batch_size)?;
    FoldReport::new(split.test_person, samples, &split.test, &pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub test_person: usize,
    pub mpjpe_m: f64,
    pub pck_05: f64,
    pub per_action: std::collections::BTreeMap<usize, ActionScore>,
    pub pretrain_best_epoch: Option<usize>,
    pub finetune_best_epoch: usize,
}

/// Aggregate LOPO metrics of one arm; the `report` subcommand reads these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LopoMetrics {
    pub method: String,
    pub folds: Vec<FoldSummary>,
    pub mpjpe_mean: f64,
    pub mpjpe_std: f64,
    pub pck_mean: f64,
    pub pck_std: f64,
}

impl LopoMetrics {
    pub fn new(method: String, folds: Vec<FoldSummary>) -> Self {
        let m: Vec<f64> = folds.iter().map(|f| f.mpjpe_m).collect();
        let p: Vec<f64> = folds.iter().map(|f| f.pck_05).collect();
        let (mpjpe_mean, mpjpe_std) = mean_std(&m);
        let (pck_mean, pck_std) = mean_std(&p);
        Self { method, folds, mpjpe_mean, mpjpe_std, pck_mean, pck_std }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn per_fold_mpjpe(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.mpjpe_m).collect()
    }
}

pub struct FoldOutcome {
    pub report: FoldReport,
    pub pretrain_log: Option<TrainLog>,
    pub finetune_log: TrainLog,
}

/// Runs the configured arm (modality, head, init) on every selected fold.
/// `on_fold` sees each outcome as it completes.
pub fn run_lopo(
    cfg: &ExperimentConfig,
    samples: &[Sample],
    mut on_fold: impl FnMut(&FoldOutcome) -> Result<()>,
) -> Result<LopoMetrics> {
    cfg.validate()?;
    let mut folds = Vec::new();
    for split in splits_for(cfg, samples)? {
        let p = split.test_person;
        log::info!("fold {p}: {} train, {} val, {} test", split.train.len(), split.val.len(), split.test.len());
        let pre = match cfg.finetune.init {
            InitMode::Pretrained => Some(pretrain_fold(cfg, samples, &split)?),
            InitMode::Random => None,
        };
        let init = pre.as_ref().map(|(s, _)| s);
        let head = cfg.finetune.head;
        let (store, ft_log) = finetune_fold(cfg, samples, &split, head, init)?;
        let report = evaluate_fold(cfg, &store, head, samples, &split)?;
        let outcome = FoldOutcome { report, pretrain_log: pre.map(|(_, l)| l), finetune_log: ft_log };
        on_fold(&outcome)?;
        folds.push(FoldSummary {
            test_person: p,
            mpjpe_m: outcome.report.mpjpe_m,
            pck_05: outcome.report.pck_05,
            per_action: outcome.report.per_action.clone(),
            pretrain_best_epoch: outcome.pretrain_log.as_ref().map(|l| l.best_epoch),
            finetune_best_epoch: outcome.finetune_log.best_epoch,
        });
        log::info!("fold {p}: mpjpe {:.4} m, pck {:.3}", outcome.report.mpjpe_m, outcome.report.pck_05);
    }
    Ok(LopoMetrics::new(cfg.label(), folds))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs LOPO and writes `config.json`, `metrics.json`, `folds/` and
/// `logs/` under the run directory, which is returned.
pub fn run_lopo_to_dir(cfg: &ExperimentConfig, samples: &[Sample]) -> Result<PathBuf> {
    let dir = cfg.run_dir()?;
    for sub in ["folds", "logs"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    write_json(&dir.join("config.json"), cfg)?;
    let metrics = run_lopo(cfg, samples, |o| {
        let p = o.report.test_person;
        write_json(&dir.join("folds").join(format!("fold-{p:02}.json")), &o.report)?;
        if let Some(l) = &o.pretrain_log {
            l.write_jsonl(&dir.join("logs").join(format!("pretrain-{p:02}.jsonl")))?;
        }
        o.finetune_log.write_jsonl(&dir.join("logs").join(format!("finetune-{p:02}.jsonl")))
    })?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_defaults_file_flags() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        fs::write(&file, r#"{"seed": 7, "finetune": {"epochs": 12, "head": "mlp"}}"#).unwrap();
        let flags = vec!["finetune.head=gcn".to_string(), "lopo.val_fraction=0.2".to_string()];
        let cfg = ExperimentConfig::resolve(ExperimentConfig::toy(), Some(&file), &flags).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.finetune.epochs, 12);
        assert_eq!(cfg.finetune.head, Head::Gcn);
        assert_eq!(cfg.lopo.val_fraction, 0.2);
        assert_eq!(cfg.pretrain.epochs, 20);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = vec!["finetune.epoch=3".to_string()];
        assert!(matches!(ExperimentConfig::resolve(ExperimentConfig::toy(), None, &bad), Err(Error::Config(_))));
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        fs::write(&file, r#"{"model": {"depth": 3}}"#).unwrap();
        assert!(matches!(ExperimentConfig::resolve(ExperimentConfig::toy(), Some(&file), &[]), Err(Error::Config(_))));
    }

    #[test]
    fn run_dir_tracks_config_not_out_dir() {
        let a = ExperimentConfig::toy();
        let b = ExperimentConfig { out_dir: PathBuf::from("/elsewhere"), ..a.clone() };
        assert_eq!(a.hash8().unwrap(), b.hash8().unwrap());
        let c = ExperimentConfig { seed: 43, ..a.clone() };
        assert_ne!(a.hash8().unwrap(), c.hash8().unwrap());
        assert!(a.run_dir().unwrap().ends_with(format!("run-{}-s42", a.hash8().unwrap())));
    }

    #[test]
    fn toy_and_default_validate() {
        ExperimentConfig::toy().validate().unwrap();
        ExperimentConfig::default().validate().unwrap();
        let dual = ExperimentConfig { modality: Input::Dual, ..ExperimentConfig::toy() };
        assert!(dual.validate().is_err());
    }
}
