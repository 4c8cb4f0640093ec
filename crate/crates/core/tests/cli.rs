use std::path::Path;
use std::process::{Command, Output};

fn zspo(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_zspo"));
    cmd.args(args).env_remove("ZSPO_OUT_DIR").env_remove("ZSPO_WORKERS");
    if let Some(dir) = out_env {
        cmd.env("ZSPO_OUT_DIR", dir);
    }
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "zspo {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn train_smoke_writes_one_row_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    zspo(&["train", "--algo", "zspo", "--T", "1", "--N", "5", "--reps", "1", "--out", out.to_str().unwrap()], None);
    let raw = lines(&out.join("raw.csv"));
    assert_eq!(raw[0], "algo,rep,t,exact_value,ci_low,ci_high");
    assert_eq!(raw.len(), 2);
    assert!(out.join("manifest.toml").exists());
    assert!(out.join("curve_zspo.svg").exists());
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    zspo(&["train", "--algo", "dpo", "--T", "2", "--N", "4"], Some(dir.path()));
    assert_eq!(lines(&dir.path().join("raw.csv")).len(), 3);
}

#[test]
fn replay_reproduces_a_training_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    zspo(
        &["train", "--algo", "zpg", "--T", "6", "--N", "7", "--reps", "2", "--seed", "3", "--out", out.to_str().unwrap()],
        None,
    );
    let again = dir.path().join("again");
    zspo(&["replay", out.join("manifest.toml").to_str().unwrap(), "--out", again.to_str().unwrap()], None);
    assert_eq!(std::fs::read(out.join("raw.csv")).unwrap(), std::fs::read(again.join("raw.csv")).unwrap());
}

#[test]
fn distinguish_appends_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    for eps in ["0.2", "0.9"] {
        zspo(&["distinguish", "--link", "step", "--eps", eps, "--samples", "2000", "--csv", csv.to_str().unwrap()], None);
    }
    let rows = lines(&csv);
    assert_eq!(rows[0], "link,gamma,D,gap,est,se,rhs,holds");
    assert_eq!(rows.len(), 3);
}

#[test]
fn zo_bench_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    zspo(&["zo-bench", "--method", "zo-sgd", "--dim", "5", "--T", "40", "--seeds", "2", "--stride", "10", "--out", csv.to_str().unwrap()], None);
    let rows = lines(&csv);
    assert_eq!(rows[0], "method,seed,t,grad_norm,f_value");
    // t = 1, 11, 21, 31 and the final iterate 41, for each seed.
    assert_eq!(rows.len(), 1 + 2 * 5);
}

#[test]
fn compare_overlays_existing_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    zspo(&["train", "--algo", "zspo", "--T", "3", "--N", "3", "--reps", "2", "--out", out.to_str().unwrap()], None);
    let svg = dir.path().join("overlay.svg");
    zspo(&["compare", "--inputs", out.join("aggregate.csv").to_str().unwrap(), "--out", svg.to_str().unwrap()], None);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));
}
