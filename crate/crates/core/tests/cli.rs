use std::path::Path;
use std::process::{Command, Output};

use specproj::spectral::fld::read_tensor;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specproj"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPECPROJ_THREADS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn small_dataset(dir: &Path) {
    ok(
        dir,
        &["--out", "gen", "generate", "kolmogorov", "--count", "2", "--set", "kolmogorov.n=8", "--set", "kolmogorov.frames=4", "--set", "kolmogorov.record_every=5"],
    );
}

#[test]
fn help_and_bad_arguments() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(run(d.path(), &["frobnicate"]).status.code(), Some(1));
    let out = run(d.path(), &["generate", "plasma"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("plasma"));
    assert_eq!(run(d.path(), &["--set", "nonsense=1", "generate", "kse"]).status.code(), Some(1));
    assert_eq!(run(d.path(), &["train", "gen", "--model-kind", "diffpcno"]).status.code(), Some(1));
}

#[test]
fn missing_inputs_are_reported() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["rollout", "--model", "nope.bin", "--init", "nope.fld"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.bin"));
}

#[test]
fn generate_writes_manifest_trajectories_and_snapshot() {
    let d = tempfile::tempdir().unwrap();
    small_dataset(d.path());
    let gen = d.path().join("gen");
    for f in ["manifest", "traj_0000.fld", "traj_0001.fld", "run.cfg"] {
        assert!(gen.join(f).exists(), "{f}");
    }
    let t = read_tensor(gen.join("traj_0000.fld")).unwrap();
    assert_eq!(t.dims, vec![3, 4, 8, 8]);
    let snapshot = std::fs::read_to_string(gen.join("run.cfg")).unwrap();
    assert!(snapshot.contains("kolmogorov.n = 8"));
}

#[test]
fn thread_env_var_is_a_fallback() {
    let d = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_specproj"))
        .args(["--out", "g", "generate", "kse", "--count", "1", "--set", "kse.n=16", "--set", "kse.warmup=0", "--set", "kse.steps=3"])
        .current_dir(d.path())
        .env("SPECPROJ_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_specproj"))
        .args(["--threads", "2", "--out", "g", "generate", "kse", "--count", "1", "--set", "kse.n=16", "--set", "kse.warmup=0", "--set", "kse.steps=3"])
        .current_dir(d.path())
        .env("SPECPROJ_THREADS", "lots")
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn train_rollout_and_evaluate() {
    let d = tempfile::tempdir().unwrap();
    small_dataset(d.path());
    ok(
        d.path(),
        &["--out", "m", "train", "gen", "--model-kind", "pcno", "--epochs", "2", "--set", "width=4", "--set", "modes=2", "--set", "layers=1", "--set", "channels=1,2"],
    );
    let losses = std::fs::read_to_string(d.path().join("m/loss.csv")).unwrap();
    assert!(losses.starts_with("step,loss\n"));
    // 6 samples fit one batch of 8: one step per epoch.
    assert_eq!(losses.lines().count(), 1 + 2);
    ok(d.path(), &["--out", "r", "rollout", "--model", "m/model.bin", "--init", "gen/traj_0000.fld", "--steps", "3", "--set", "channels=1,2"]);
    let t = read_tensor(d.path().join("r/rollout.fld")).unwrap();
    assert_eq!(t.dims, vec![2, 3, 8, 8]);

    std::fs::create_dir_all(d.path().join("pred")).unwrap();
    std::fs::create_dir_all(d.path().join("truth")).unwrap();
    std::fs::copy(d.path().join("r/rollout.fld"), d.path().join("pred/a.fld")).unwrap();
    std::fs::copy(d.path().join("gen/traj_0000.fld"), d.path().join("truth/a.fld")).unwrap();
    std::fs::copy(d.path().join("gen/traj_0001.fld"), d.path().join("truth/b.fld")).unwrap();
    let out = run(d.path(), &["--out", "e", "evaluate", "--pred", "pred", "--truth", "truth", "--set", "truth_offset=1", "--set", "truth_channels=1,2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("b.fld"));
    std::fs::remove_file(d.path().join("truth/b.fld")).unwrap();
    ok(
        d.path(),
        &["--out", "e", "evaluate", "--pred", "pred", "--truth", "truth", "--metrics", "nrmse,mse,pearson,divergence", "--set", "truth_offset=1", "--set", "truth_channels=1,2"],
    );
    let text = std::fs::read_to_string(d.path().join("e/metrics.txt")).unwrap();
    assert!(text.contains("grid = 8x8"));
    assert!(text.contains("high_corr_step.0.9"));
    let csv = std::fs::read_to_string(d.path().join("e/metrics.csv")).unwrap();
    let div: Vec<f64> = csv
        .lines()
        .filter(|l| l.contains(",divergence,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(div.len(), 3);
    assert!(div.iter().all(|&v| v < 1e-10), "{div:?}");
}

#[test]
fn projection_command_removes_divergence() {
    let d = tempfile::tempdir().unwrap();
    small_dataset(d.path());
    ok(d.path(), &["--out", "p", "project", "gen/traj_0000.fld", "--selector", "none"]);
    assert_eq!(
        std::fs::read(d.path().join("p/projected.fld")).unwrap(),
        std::fs::read(d.path().join("gen/traj_0000.fld")).unwrap()
    );
    let out = run(d.path(), &["--out", "p", "project", "gen/traj_0000.fld", "--selector", "mass"]);
    assert_eq!(out.status.code(), Some(2));
    ok(d.path(), &["--out", "p", "project", "gen/traj_0000.fld", "--selector", "momentum", "--set", "trajectory=true"]);
    assert_eq!(read_tensor(d.path().join("p/projected.fld")).unwrap().dims, vec![3, 4, 8, 8]);
}
