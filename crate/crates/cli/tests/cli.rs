use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &[&str] = &[
    "--toy",
    "--set",
    "data.persons=3",
    "--set",
    "data.actions=2",
    "--set",
    "data.clips_per_action=2",
    "--set",
    "pretrain.epochs=2",
    "--set",
    "pretrain.early_stop_patience=2",
    "--set",
    "finetune.epochs=2",
    "--set",
    "finetune.early_stop_patience=2",
    "--set",
    "lopo.val_fraction=0.2",
];

fn maepose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maepose"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn with_small(extra: &[&str]) -> Vec<String> {
    extra.iter().chain(SMALL).map(|s| s.to_string()).collect()
}

fn run_ok(args: &[String]) -> Value {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = maepose(&refs);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(stdout.lines().last().unwrap()).unwrap()
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).expect("machine-parsable error record")
}

#[test]
fn unknown_flag_is_a_config_error() {
    let out = maepose(&["lopo", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "usage");
}

#[test]
fn unknown_config_key_exits_2() {
    let out = maepose(&["--set", "finetune.epoch=3", "lopo"]);
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "config");
    assert_eq!(rec["exit_code"], 2);
}

#[test]
fn missing_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = maepose(&["process", "--input", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"], "io");
}

#[test]
fn diverging_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let mut args = with_small(&["lopo", "--out", out_dir]);
    args.extend(["--set", "finetune.base_lr=1e30", "--init", "random", "--set", "lopo.folds=[0]"].map(String::from));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = maepose(&refs);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_record(&out)["error"], "numeric");
}

#[test]
fn staged_pipeline_and_reproducible_lopo() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let modality = ["--modality", "ra"];

    let sim = run_ok(&with_small(&["simulate", "--out", &p("iq")]));
    assert_eq!(sim["clips"], 12);
    let mut args = with_small(&["process", "--input", &p("iq"), "--out", &p("clips")]);
    args.extend(modality.map(String::from));
    assert_eq!(run_ok(&args)["clips"], 12);

    let mut args = with_small(&["pretrain", "--data", &p("clips"), "--fold", "1", "--out", &p("pre")]);
    args.extend(modality.map(String::from));
    run_ok(&args);
    assert!(Path::new(&p("pre/checkpoint/checkpoint.json")).exists());
    assert_eq!(fs::read_to_string(p("pre/pretrain.jsonl")).unwrap().lines().count(), 3);

    let mut args = with_small(&[
        "finetune", "--data", &p("clips"), "--fold", "1", "--checkpoint", &p("pre/checkpoint"), "--out", &p("ft"),
    ]);
    args.extend(modality.map(String::from));
    run_ok(&args);

    let mut args =
        with_small(&["evaluate", "--data", &p("clips"), "--fold", "1", "--checkpoint", &p("ft/checkpoint"), "--out", &p("fold1.json")]);
    args.extend(modality.map(String::from));
    let ev = run_ok(&args);
    let report: Value = serde_json::from_str(&fs::read_to_string(p("fold1.json")).unwrap()).unwrap();
    assert_eq!(report["test_person"], 1);
    assert_eq!(report["clips"].as_array().unwrap().len(), 4);
    assert_eq!(ev["mpjpe_m"], report["mpjpe_m"]);

    // init=pretrained without a checkpoint is a config error
    let mut args = with_small(&["finetune", "--data", &p("clips"), "--fold", "1", "--out", &p("ft2")]);
    args.extend(modality.map(String::from));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(maepose(&refs).status.code(), Some(2));

    // lopo twice into separate parents: same run name, identical metrics
    let mut runs = Vec::new();
    for parent in ["a", "b"] {
        let mut args = with_small(&["lopo", "--data", &p("clips"), "--out", &p(parent)]);
        args.extend(modality.map(String::from));
        let v = run_ok(&args);
        assert_eq!(v["folds"], 3);
        runs.push(v["run_dir"].as_str().unwrap().to_string());
    }
    let name = |s: &str| Path::new(s).file_name().unwrap().to_owned();
    assert_eq!(name(&runs[0]), name(&runs[1]));
    let a = fs::read(Path::new(&runs[0]).join("metrics.json")).unwrap();
    let b = fs::read(Path::new(&runs[1]).join("metrics.json")).unwrap();
    assert_eq!(a, b);
    let cfg: Value = serde_json::from_str(&fs::read_to_string(Path::new(&runs[0]).join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["finetune"]["epochs"], 2);
    assert!(Path::new(&runs[0]).join("folds/fold-02.json").exists());
    assert!(Path::new(&runs[0]).join("logs/finetune-00.jsonl").exists());

    // a random-init arm, then a two-arm report: one pairwise comparison at most
    let mut args = with_small(&["lopo", "--data", &p("clips"), "--out", &p("c"), "--init", "random"]);
    args.extend(modality.map(String::from));
    let random = run_ok(&args)["run_dir"].as_str().unwrap().to_string();
    let arm_a = format!("pretrained={}", runs[0]);
    let arm_b = format!("random={random}");
    let rep = run_ok(&["report", "--arm", &arm_a, "--arm", &arm_b, "--out", &p("report")].map(String::from));
    assert_eq!(rep["methods"], 2);
    let stats: Value = serde_json::from_str(&fs::read_to_string(p("report/stats.json")).unwrap()).unwrap();
    assert_eq!(stats["metric"].as_array().unwrap().len(), 3);
    if let Some(ph) = stats["posthoc"].as_object() {
        assert_eq!(ph["comparisons"].as_array().unwrap().len(), 1);
    }
    assert!(fs::read_to_string(p("report/table.txt")).unwrap().contains("Friedman"));
}
