use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn simmst(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simmst"))
        .args(args)
        .env("SIMMST_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        stdout(&out),
        stderr(&out)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf8 path")
}

/// Small coupled dataset: three nodes, 240 steps.
fn dataset(tmp: &TempDir) -> PathBuf {
    let dir = tmp.path().join("data");
    ok(simmst(
        &[
            "generate",
            "--out",
            path(&dir),
            "--nodes",
            "3",
            "--steps",
            "240",
            "--seed",
            "3",
        ],
        tmp.path(),
    ));
    dir
}

const SMALL: &[&str] = &["--hidden-dim", "8", "--embed-dim", "8", "--batch-size", "16", "--quiet"];

fn train_small(tmp: &TempDir, data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", path(data), "--out", path(out), "--epochs", "4"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    ok(simmst(&args, tmp.path()))
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .expect("dir")
        .map(|e| {
            let e = e.expect("entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).expect("file"),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn gradcheck_passes_on_the_tiny_config() {
    let tmp = TempDir::new().unwrap();
    let out = ok(simmst(&["gradcheck"], tmp.path()));
    let text = stdout(&out);
    let errors: Vec<f64> = text
        .lines()
        .filter_map(|l| l.split("max relative error ").nth(1))
        .map(|rest| rest.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(errors.len(), 2, "{text}");
    assert!(errors.iter().all(|&e| e < 1e-4), "{text}");
}

#[test]
fn generate_is_byte_identical_for_a_seed() {
    let tmp = TempDir::new().unwrap();
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|n| tmp.path().join(n)).collect();
    for d in &dirs {
        ok(simmst(
            &["generate", "--seed", "7", "--csv", "--out", path(d)],
            tmp.path(),
        ));
    }
    let a = files(&dirs[0]);
    assert!(a.iter().any(|(n, _)| n == "metadata.json"));
    assert!(a.iter().any(|(n, _)| n.ends_with(".csv")));
    assert_eq!(a, files(&dirs[1]));
}

#[test]
fn generate_honors_the_output_root() {
    let tmp = TempDir::new().unwrap();
    ok(simmst(&["generate", "--steps", "120"], tmp.path()));
    assert!(tmp.path().join("data").join("metadata.json").exists());
}

#[test]
fn evaluate_reproduces_the_best_validation_loss() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp);
    let run = tmp.path().join("run");
    train_small(&tmp, &data, &run, &[]);
    let best = fs::read_to_string(run.join("history.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["val_loss"]
                .as_f64()
                .unwrap()
        })
        .fold(f64::INFINITY, f64::min);

    let out = ok(simmst(&["evaluate", "--run", path(&run), "--split", "val"], tmp.path()));
    let text = stdout(&out);
    let loss: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("val loss "))
        .and_then(|rest| rest.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(loss, best);
    let csv = fs::read_to_string(run.join("metrics_val.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mode,horizon,mae,rmse,corr");
    // Two modes, each at the default horizon steps.
    assert_eq!(lines.len(), 1 + 2 * 3);

    ok(simmst(&["evaluate", "--run", path(&run)], tmp.path()));
    assert!(run.join("metrics_test.csv").exists());
    let out = ok(simmst(&["predict", "--run", path(&run), "--split", "test"], tmp.path()));
    assert!(stdout(&out).contains("windows"));
    assert!(run.join("predictions_test.csv").exists());
}

#[test]
fn resolved_config_reproduces_the_run_bitwise() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp);
    let first = tmp.path().join("first");
    train_small(&tmp, &data, &first, &["--seed", "5"]);
    let second = tmp.path().join("second");
    let cfg = first.join("config.toml");
    ok(simmst(
        &["train", "--config", path(&cfg), "--out", path(&second), "--quiet"],
        tmp.path(),
    ));
    let ckpt = |d: &Path| fs::read(d.join("best.ckpt")).unwrap();
    assert_eq!(ckpt(&first), ckpt(&second));
    let history = |d: &Path| -> Vec<serde_json::Value> {
        fs::read_to_string(d.join("history.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_ms");
                v
            })
            .collect()
    };
    assert_eq!(history(&first), history(&second));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp);
    let file = tmp.path().join("run.toml");
    fs::write(
        &file,
        "[model]\nnum_layers = 3\nhidden_dim = 8\n\n[train]\nmax_epochs = 1\n",
    )
    .unwrap();
    let run = tmp.path().join("run");
    ok(simmst(
        &[
            "train",
            "--config",
            path(&file),
            "--data",
            path(&data),
            "--out",
            path(&run),
            "--layers",
            "1",
            "--quiet",
        ],
        tmp.path(),
    ));
    let resolved: toml::Table = toml::from_str(&fs::read_to_string(run.join("config.toml")).unwrap()).unwrap();
    assert_eq!(resolved["model"]["num_layers"].as_integer(), Some(1));
    assert_eq!(resolved["model"]["hidden_dim"].as_integer(), Some(8));
    assert_eq!(resolved["model"]["embed_dim"].as_integer(), Some(40));
    assert_eq!(resolved["train"]["max_epochs"].as_integer(), Some(1));
}

#[test]
fn unknown_key_is_a_usage_error_with_a_suggestion() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("typo.toml");
    fs::write(&file, "[model]\nhiden_dim = 8\n").unwrap();
    let out = simmst(&["params", "--config", path(&file)], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("did you mean `hidden_dim`"), "{}", stderr(&out));
}

#[test]
fn type_mismatch_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("bad.toml");
    fs::write(&file, "[train]\nbatch_size = \"big\"\n").unwrap();
    let out = simmst(&["params", "--config", path(&file)], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("batch_size"), "{}", stderr(&out));
}

#[test]
fn unknown_subcommand_exits_with_usage_code() {
    let tmp = TempDir::new().unwrap();
    let out = simmst(&["fly"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_reported() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nowhere");
    let out = simmst(&["train", "--data", path(&missing), "--quiet"], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
}

#[test]
fn params_prints_count_and_scaling() {
    let tmp = TempDir::new().unwrap();
    let out = ok(simmst(&["params"], tmp.path()));
    let text = stdout(&out);
    assert!(text.starts_with("parameters: "), "{text}");
    let exponent: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("growth exponent vs W (temporal mixers): "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((exponent - 2.0).abs() <= 0.2);
}

#[test]
fn ablate_emits_a_comparison_table() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(&tmp);
    let out_dir = tmp.path().join("ablate");
    let mut args = vec![
        "ablate",
        "--data",
        path(&data),
        "--out",
        path(&out_dir),
        "--epochs",
        "2",
        "--seeds",
        "0",
    ];
    args.extend_from_slice(SMALL);
    let out = ok(simmst(&args, tmp.path()));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("variant,"), "{text}");
    let variants: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(variants, ["full", "w/o TDL", "w/o CSRL", "w/o CCL"]);
    assert_eq!(fs::read_to_string(out_dir.join("ablation.csv")).unwrap(), text);
    assert!(out_dir.join("ablation_runs.csv").exists());
}
