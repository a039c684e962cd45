use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use maepose::dataset::{process_iq_dataset, read_dataset, write_dataset, write_iq_dataset, IqManifest, LopoSplit, Sample};
use maepose::eval::compare_methods;
use maepose::experiment::{
    build_samples, cfg_extractor, evaluate_fold, finetune_fold, pretrain_fold, run_lopo_to_dir, splits_for, write_json,
    ExperimentConfig, LopoMetrics,
};
use maepose::model::{Checkpoint, Head, Parts};
use maepose::scene::generate_dataset;
use maepose::train::InitMode;
use maepose::{Error, Result};

/// Synthetic mmWave pose estimation: simulate, extract, pre-train,
/// fine-tune and evaluate leave-one-person-out.
#[derive(Parser, Debug)]
#[command(name = "maepose", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config layered over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the desk-scale preset instead of the full-size defaults.
    #[arg(long, global = true)]
    toy: bool,
    /// Dotted-key override, e.g. `--set finetune.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// rd, ra or dual.
    #[arg(long, global = true)]
    modality: Option<String>,
    /// heatmap, mlp or gcn (fine-tuning head).
    #[arg(long, global = true)]
    head: Option<String>,
    /// pretrained or random (fine-tuning initialisation).
    #[arg(long, global = true)]
    init: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Simulate raw IQ clips into a container directory.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        interference: bool,
    },
    /// Turn an IQ container into normalised spectrogram clips.
    Process {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked-reconstruction pre-training for one fold.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        /// Held-out person.
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pose fine-tuning for one fold.
    Finetune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fold: usize,
        /// Pre-trained checkpoint directory (required with init=pretrained).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a fine-tuned checkpoint on its fold's test person.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        checkpoint: PathBuf,
        /// FoldReport JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Statistical comparison of LOPO runs.
    Report {
        /// `name=run_dir`, at least two.
        #[arg(long = "arm", value_name = "NAME=DIR", required = true)]
        arms: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full per-fold pipeline for every (or each configured) test person.
    Lopo {
        /// Clip container; simulated in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Parent of the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(c: &Common, out_dir: Option<&Path>) -> Result<ExperimentConfig> {
    let base = if c.toy { ExperimentConfig::toy() } else { ExperimentConfig::default() };
    let mut sets = Vec::new();
    if let Some(s) = c.seed {
        sets.push(format!("seed={s}"));
    }
    if let Some(m) = &c.modality {
        sets.push(format!("modality={m}"));
        if m == "dual" {
            sets.push("model.dual_stream=true".into());
        }
    }
    if let Some(h) = &c.head {
        sets.push(format!("finetune.head={h}"));
    }
    if let Some(i) = &c.init {
        sets.push(format!("finetune.init={i}"));
    }
    if let Some(o) = out_dir {
        sets.push(format!("out_dir={}", json!(o.display().to_string())));
    }
    sets.extend(c.sets.iter().cloned());
    ExperimentConfig::resolve(base, c.config.as_deref(), &sets)
}

fn load_clips(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Sample>> {
    let (_, samples) = read_dataset(dir)?;
    let want = [cfg.model.frames, cfg.model.height, cfg.model.width];
    for s in &samples {
        if s.dims != want {
            return Err(Error::Config(format!("clip {} is {:?}, model expects {want:?}", s.id, s.dims)));
        }
        for m in cfg.modality.modalities() {
            s.modality(m)?;
        }
    }
    Ok(samples)
}

fn fold_split(cfg: &ExperimentConfig, samples: &[Sample], fold: usize) -> Result<LopoSplit> {
    let cfg = ExperimentConfig { lopo: maepose::experiment::LopoConfig { folds: vec![], ..cfg.lopo.clone() }, ..cfg.clone() };
    splits_for(&cfg, samples)?
        .into_iter()
        .find(|s| s.test_person == fold)
        .ok_or_else(|| Error::Config(format!("dataset has no person {fold}")))
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let c = &cli.common;
    match cli.cmd {
        Cmd::Simulate { out, interference } => {
            let cfg = resolve(c, None)?;
            let d = &cfg.data;
            let scenes = generate_dataset(
                d.persons,
                d.actions,
                d.clips_per_action,
                interference || d.interference,
                cfg.seed,
                &cfg.radar,
                &cfg.scene,
            )?;
            let m = write_iq_dataset(&out, &scenes, &cfg.radar, &cfg.scene, cfg.seed)?;
            Ok(json!({"command": "simulate", "clips": m.clips.len(), "out": out}))
        }
        Cmd::Process { input, out } => {
            let cfg = resolve(c, None)?;
            let iq = IqManifest::load(&input)?;
            let cfg = ExperimentConfig { radar: iq.radar.clone(), scene: iq.scene.clone(), ..cfg };
            let (_, samples) = process_iq_dataset(&input, &cfg_extractor(&cfg)?)?;
            let degenerate = samples.iter().flat_map(|s| s.frames.values()).filter(|f| f.degenerate).count();
            write_dataset(&out, &samples, iq.seed)?;
            Ok(json!({"command": "process", "clips": samples.len(), "degenerate": degenerate, "out": out}))
        }
        Cmd::Pretrain { data, fold, out } => {
            let cfg = resolve(c, None)?;
            let samples = load_clips(&cfg, &data)?;
            let split = fold_split(&cfg, &samples, fold)?;
            let (store, log) = pretrain_fold(&cfg, &samples, &split)?;
            mkdir(&out)?;
            Checkpoint::save(&out.join("checkpoint"), &cfg.model, Parts { recon_decoder: true, head: None }, &store)?;
            log.write_jsonl(&out.join("pretrain.jsonl"))?;
            write_json(&out.join("config.json"), &cfg)?;
            Ok(json!({"command": "pretrain", "fold": fold, "best_epoch": log.best_epoch, "best_val_loss": log.best_metric}))
        }
        Cmd::Finetune { data, fold, checkpoint, out } => {
            let cfg = resolve(c, None)?;
            let samples = load_clips(&cfg, &data)?;
            let split = fold_split(&cfg, &samples, fold)?;
            let init = match (cfg.finetune.init, checkpoint) {
                (InitMode::Pretrained, Some(dir)) => {
                    let (model, _, store) = Checkpoint::load(&dir)?;
                    if model != cfg.model {
                        return Err(Error::Config("checkpoint model config differs from the experiment's".into()));
                    }
                    Some(store)
                }
                (InitMode::Pretrained, None) => {
                    return Err(Error::Config("init=pretrained needs --checkpoint".into()));
                }
                (InitMode::Random, _) => None,
            };
            let head = cfg.finetune.head;
            let (store, log) = finetune_fold(&cfg, &samples, &split, head, init.as_ref())?;
            mkdir(&out)?;
            Checkpoint::save(&out.join("checkpoint"), &cfg.model, Parts { recon_decoder: false, head: Some(head) }, &store)?;
            log.write_jsonl(&out.join("finetune.jsonl"))?;
            write_json(&out.join("config.json"), &cfg)?;
            Ok(json!({"command": "finetune", "fold": fold, "best_epoch": log.best_epoch, "best_val_mpjpe": log.best_metric}))
        }
        Cmd::Evaluate { data, fold, checkpoint, out } => {
            let cfg = resolve(c, None)?;
            let (model, parts, store) = Checkpoint::load(&checkpoint)?;
            let head: Head = parts.head.ok_or_else(|| Error::Config("checkpoint has no pose head".into()))?;
            let cfg = ExperimentConfig { model, ..cfg };
            let samples = load_clips(&cfg, &data)?;
            let split = fold_split(&cfg, &samples, fold)?;
            let report = evaluate_fold(&cfg, &store, head, &samples, &split)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                mkdir(parent)?;
            }
            write_json(&out, &report)?;
            Ok(json!({"command": "evaluate", "fold": fold, "mpjpe_m": report.mpjpe_m, "pck_05": report.pck_05}))
        }
        Cmd::Report { arms, out } => {
            let mut methods = Vec::new();
            let mut persons: Option<Vec<usize>> = None;
            for a in &arms {
                let (name, dir) =
                    a.split_once('=').ok_or_else(|| Error::Config(format!("--arm {a:?} is not NAME=DIR")))?;
                let path = PathBuf::from(dir);
                let file = if path.is_dir() { path.join("metrics.json") } else { path };
                let m = LopoMetrics::load(&file)?;
                let order: Vec<usize> = m.folds.iter().map(|f| f.test_person).collect();
                match &persons {
                    Some(p) if *p != order => {
                        return Err(Error::Data(format!("arm {name} covers folds {order:?}, others {p:?}")))
                    }
                    _ => persons = Some(order),
                }
                methods.push((name.to_string(), m.per_fold_mpjpe()));
            }
            let report = compare_methods(&methods)?;
            mkdir(&out)?;
            write_json(&out.join("stats.json"), &report)?;
            let table = report.table();
            fs::write(out.join("table.txt"), &table).map_err(|e| Error::io(out.join("table.txt"), e))?;
            print!("{table}");
            Ok(json!({"command": "report", "methods": methods.len(), "friedman_p": report.friedman.1}))
        }
        Cmd::Lopo { data, out } => {
            let cfg = resolve(c, out.as_deref())?;
            let samples = match data {
                Some(dir) => load_clips(&cfg, &dir)?,
                None => build_samples(&cfg, cfg.data.interference)?,
            };
            let dir = run_lopo_to_dir(&cfg, &samples)?;
            let m = LopoMetrics::load(&dir.join("metrics.json"))?;
            Ok(json!({
                "command": "lopo",
                "run_dir": dir,
                "folds": m.folds.len(),
                "mpjpe_mean": m.mpjpe_mean,
                "mpjpe_std": m.mpjpe_std,
                "pck_mean": m.pck_mean,
            }))
        }
    }
}

fn fail(kind: &str, code: u8, message: &str) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "exit_code": code, "message": message}));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            return fail("usage", 2, msg.lines().next().unwrap_or_default());
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.exit_code() as u8, &e.to_string()),
    }
}
