use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gse_core::audio::read_wav;
use gse_core::nn::Checkpoint;
use gse_core::DenoiserModel;
use serde_json::Value;

const SMALL: &str = r#"
[train]
steps = 40
learning_rate = 0.002

[data]
n_train = 16
n_test = 2
test_s = 0.2

[score_net]
hidden = 12
time_dim = 8

[denoiser]
hidden = 12
"#;

fn gse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gse"))
        .current_dir(dir)
        .args(args)
        .env("GSE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Writes the small config, a test pair and both trained checkpoints.
fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let p = dir.path();
    ok(&gse(p, &["--config", "small.toml", "synth", "--out", "data"]));
    ok(&gse(p, &["--config", "small.toml", "train", "--role", "score", "--out", "models"]));
    ok(&gse(p, &["--config", "small.toml", "train", "--role", "denoiser", "--out", "models"]));
    dir
}

fn enhance(dir: &Path, out: &str, extra: &[&str]) -> Value {
    let mut args = vec![
        "--config",
        "small.toml",
        "enhance",
        "--input",
        "data/noisy_000.wav",
        "--score",
        "models/score.json",
        "--denoiser",
        "models/denoiser.json",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    ok(&gse(dir, &args));
    json(dir.join(out).join("manifest.json"))
}

#[test]
fn end_to_end_commands() {
    let dir = fixture();
    let p = dir.path();

    let files: Vec<_> = std::fs::read_dir(p.join("data")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.len(), 5, "two pairs plus the manifest");
    let m = json(p.join("models/manifest.json"));
    assert_eq!(m["command"], "train");
    let curve = std::fs::read_to_string(p.join("models/score_loss.csv")).unwrap();
    assert_eq!(curve.lines().count(), 41);

    // streaming at 50 ms and 16 kHz
    let m = enhance(p, "stream", &["--n-phi", "12", "--streaming", "on", "--chunk-ms", "50"]);
    assert_eq!(m["summary"]["chunk_size"], 800);
    assert_eq!(m["summary"]["bank_states"], 30);
    let report = json(p.join("stream/report.json"));
    assert_eq!(report["algorithmic_latency_ms"], 50.0);

    // generative path never touches the denoiser
    enhance(p, "gen", &["--n-phi", "0"]);
    let report = json(p.join("gen/report.json"));
    assert_eq!(report["ledger"]["denoiser_forwards"], 0);
    assert_eq!(report["ledger"]["score_net_forwards"], 60);

    // all-discriminative path lands on the denoiser output
    enhance(p, "disc", &["--n-phi", "30"]);
    let noisy = read_wav(&p.join("data/noisy_000.wav")).unwrap();
    let den = Checkpoint::load(&p.join("models/denoiser.json")).unwrap().denoiser().unwrap();
    let peak = noisy.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = 0.9 / peak;
    let scaled: Vec<f64> = noisy.samples().iter().map(|v| v * gain).collect();
    let (x_d, _) = den.denoise(&scaled, &vec![0.0; den.state_dim()]).unwrap();
    let out = read_wav(&p.join("disc/enhanced.wav")).unwrap();
    let num: f64 = out.samples().iter().zip(&x_d).map(|(a, b)| (a - b / gain).powi(2)).sum();
    let norm: f64 = x_d.iter().map(|v| (v / gain).powi(2)).sum();
    assert!((num / norm).sqrt() < 0.05);

    // a manifest alone reproduces the run bit for bit
    ok(&gse(p, &["rerun", "stream/manifest.json", "--out", "again"]));
    assert_eq!(
        std::fs::read(p.join("stream/enhanced.wav")).unwrap(),
        std::fs::read(p.join("again/enhanced.wav")).unwrap()
    );
    let again = json(p.join("again/manifest.json"));
    assert_eq!(again["invocation"], json(p.join("stream/manifest.json"))["invocation"]);

    // sweep: one row per (n_phi, seed) plus medians, MACs affine over guided rows
    ok(&gse(
        p,
        &[
            "--config", "small.toml", "sweep", "--score", "models/score.json", "--denoiser", "models/denoiser.json",
            "--n-phi", "6,12,18", "--seeds", "2", "--out", "sweep",
        ],
    ));
    let csv = std::fs::read_to_string(p.join("sweep/sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3 * 2 + 3);
    let macs: Vec<u64> = rows
        .iter()
        .filter(|r| r.split(',').nth(1) == Some("median"))
        .map(|r| r.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    assert_eq!(macs.len(), 3);
    assert_eq!(macs[0] - macs[1], macs[1] - macs[2]);
}

#[test]
fn n_phi_and_t_phi_are_mutually_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = gse(
        dir.path(),
        &["enhance", "--input", "a.wav", "--score", "s.json", "--n-phi", "3", "--t-phi", "0.5"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[sde]\ngamma = -1.0\n").unwrap();
    let out = gse(dir.path(), &["--config", "bad.toml", "cost"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("typo.toml"), "[sde]\ngama = 1.0\n").unwrap();
    let out = gse(dir.path(), &["--config", "typo.toml", "cost"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergent_training_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[train]\nsteps = 20\nlearning_rate = 1e300\nclip_norm = 0.0\n[data]\nn_train = 4\n[denoiser]\nhidden = 4\n";
    std::fs::write(dir.path().join("hot.toml"), cfg).unwrap();
    let out = gse(dir.path(), &["--config", "hot.toml", "train", "--role", "denoiser"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gse(dir.path(), &["enhance", "--input", "none.wav", "--score", "none.json"]);
    assert!(!out.status.success());
    assert!(!dir.path().join("out/manifest.json").exists());
}

#[test]
fn simulate_forward_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("flat.toml"), "[sde]\nsigma_min = 0.01\nsigma_max = 0.01\n").unwrap();
    ok(&gse(
        dir.path(),
        &["--config", "flat.toml", "simulate-forward", "--paths", "500", "--steps", "200", "--out", "fwd"],
    ));
    let csv = std::fs::read_to_string(dir.path().join("fwd/forward.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,mean_rel_err,empirical_var,kernel_var"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
}

#[test]
fn cost_table_has_a_row_per_step_count() {
    let dir = tempfile::tempdir().unwrap();
    ok(&gse(dir.path(), &["cost", "--length", "800", "--out", "cost"]));
    let csv = std::fs::read_to_string(dir.path().join("cost/cost.csv")).unwrap();
    assert_eq!(csv.lines().count(), 32);
    let m = json(dir.path().join("cost/manifest.json"));
    assert_eq!(m["command"], "cost");
    assert!(m["version"].as_str().unwrap().starts_with("gse-"));
}
