use std::path::{Path, PathBuf};
use std::process::Command;

use opdyn_core::trajectory::Trajectory;
use sha2::{Digest, Sha256};

fn opdyn(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_opdyn"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("run opdyn");
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn hash(path: &str) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

/// Coefficient block only: the data rows after the header.
fn coefficient_block(path: &str) -> Vec<String> {
    let t = Trajectory::load(path).unwrap();
    t.coeffs().rows().into_iter().map(|r| format!("{r:?}")).collect()
}

const FAST_TRAIN: &[&str] = &[
    "network.width=8",
    "train.max_epochs=3",
    "train.window_steps=3",
    "train.batch_size=8",
];

#[test]
fn generate_full_basis_n3() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "traj.txt");
    let (code, log) = opdyn(&["generate", "--out", &out]);
    assert_eq!(code, 0, "{log}");
    let t = Trajectory::load(&out).unwrap();
    assert_eq!((t.n_times(), t.n_series()), (51, 63));
    assert!(log.contains("basis: 63 strings"), "{log}");
    assert!(Path::new(&(out.clone() + ".config")).exists());

    let (code, _) = opdyn(&["generate", "--out", &out, "grid.t_end=0"]);
    assert_eq!(code, 0);
    assert_eq!(Trajectory::load(&out).unwrap().n_times(), 1);
}

#[test]
fn radius_sweep_is_logged() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "traj.txt");
    let (code, log) = opdyn(&[
        "generate",
        "--out",
        &out,
        "tfim.n_sites=5",
        "truncation.mode=window",
        "truncation.symmetry=true",
        "truncation.sweep=true",
        "grid.t_end=1",
    ]);
    assert_eq!(code, 0, "{log}");
    for r in 0..=2 {
        assert!(log.contains(&format!("radius {r}:")), "{log}");
    }
}

#[test]
fn config_errors_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "x.txt");
    assert_eq!(opdyn(&["generate", "--out", &out, "tfim.bogus=1"]).0, 1);
    assert_eq!(opdyn(&["generate", "--out", &out, "tfim.n_sites=abc"]).0, 1);
    assert_eq!(opdyn(&["frobnicate"]).0, 1);
    assert_eq!(opdyn(&["generate"]).0, 1);
    let cfg = p(dir.path(), "bad.cfg");
    std::fs::write(&cfg, "tfim.n_sites 3\n").unwrap();
    assert_eq!(opdyn(&["generate", "--config", &cfg, "--out", &out]).0, 1);
    assert_eq!(opdyn(&["--help"]).0, 0);
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "run.cfg");
    std::fs::write(&cfg, "# two sites\ntfim.n_sites = 2\ngrid.t_end = 1\n").unwrap();
    let out = p(dir.path(), "traj.txt");
    assert_eq!(opdyn(&["generate", "--config", &cfg, "--out", &out, "grid.dt=0.5"]).0, 0);
    let t = Trajectory::load(&out).unwrap();
    assert_eq!((t.n_times(), t.n_series()), (3, 15));
    let echo = std::fs::read_to_string(out + ".config").unwrap();
    assert!(echo.contains("tfim.n_sites = 2\n") && echo.contains("grid.dt = 0.5\n"));
}

#[test]
fn noise_stage_is_deterministic_and_transparent_when_off() {
    let dir = tempfile::tempdir().unwrap();
    let clean = p(dir.path(), "clean.txt");
    assert_eq!(opdyn(&["generate", "--out", &clean]).0, 0);
    let off = p(dir.path(), "off.txt");
    assert_eq!(opdyn(&["noise", "--in", &clean, "--out", &off]).0, 0);
    assert_eq!(coefficient_block(&clean), coefficient_block(&off));
    let a = p(dir.path(), "a.txt");
    let b = p(dir.path(), "b.txt");
    for f in [&a, &b] {
        let (code, log) = opdyn(&["noise", "--in", &clean, "--out", f, "noise.gamma=0.05", "noise.sigma=0.01"]);
        assert_eq!(code, 0, "{log}");
    }
    assert_eq!(hash(&a), hash(&b));
    assert_ne!(coefficient_block(&a), coefficient_block(&clean));
}

#[test]
fn train_predict_spectrum_round() {
    let dir = tempfile::tempdir().unwrap();
    let traj = p(dir.path(), "traj.txt");
    assert_eq!(opdyn(&["generate", "--out", &traj]).0, 0);
    let ck = p(dir.path(), "model.ck");
    let mut args = vec!["train", "--in", &traj, "--out", &ck];
    args.extend_from_slice(FAST_TRAIN);
    let (code, log) = opdyn(&args);
    assert_eq!(code, 0, "{log}");
    let history = std::fs::read_to_string(ck.clone() + ".history").unwrap();
    assert_eq!(history.lines().count(), 2 + 3);

    // resuming continues the epoch count
    let ck2 = p(dir.path(), "model2.ck");
    let resume = format!("train.resume={ck}");
    let mut args = vec!["train", "--in", &traj, "--out", &ck2, &resume];
    args.extend_from_slice(FAST_TRAIN);
    assert_eq!(opdyn(&args).0, 0);
    let history = std::fs::read_to_string(ck2.clone() + ".history").unwrap();
    assert_eq!(history.lines().count(), 2 + 6);
    assert!(history.lines().last().unwrap().starts_with("5 "));

    let pred = p(dir.path(), "pred.txt");
    let reference = format!("predict.reference={traj}");
    let (code, log) = opdyn(&["predict", "--in", &ck, "--out", &pred, &reference, "predict.t_end=8"]);
    assert_eq!(code, 0, "{log}");
    let t = Trajectory::load(&pred).unwrap();
    assert_eq!(t.n_times(), 31);
    assert!((t.times()[0] - 5.0).abs() < 1e-12);

    // t0 outside the reference span
    let (code, log) = opdyn(&["predict", "--in", &ck, "--out", &pred, &reference, "predict.t0=7"]);
    assert_eq!(code, 1);
    assert!(log.contains("outside the reference data span"), "{log}");

    let spec = p(dir.path(), "train.spec");
    let (code, log) = opdyn(&["spectrum", "--in", &traj, "--out", &spec]);
    assert_eq!(code, 0, "{log}");
    assert!(log.contains("poorly resolved"), "{log}");
    let text = std::fs::read_to_string(&spec).unwrap();
    assert!(text.starts_with("opdyn-spec v1\n") && text.contains("low_resolution=true"));
    assert!(std::fs::read_to_string(spec + ".peaks").unwrap().starts_with("opdyn-peaks v1\n"));

    let stitched = p(dir.path(), "stitched.spec");
    let prefix = format!("spectrum.prefix={traj}");
    assert_eq!(opdyn(&["spectrum", "--in", &pred, "--out", &stitched, &prefix]).0, 0);
    assert!(std::fs::read_to_string(&stitched).unwrap().contains("n_samples=81"));
}

#[test]
fn empty_or_corrupt_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let empty = p(dir.path(), "empty.txt");
    std::fs::write(&empty, "").unwrap();
    let out = p(dir.path(), "s.spec");
    assert_eq!(opdyn(&["spectrum", "--in", &empty, "--out", &out]).0, 1);

    let traj = p(dir.path(), "traj.txt");
    assert_eq!(opdyn(&["generate", "--out", &traj]).0, 0);
    let text = std::fs::read_to_string(&traj).unwrap();
    let corrupt = p(dir.path(), "corrupt.txt");
    std::fs::write(&corrupt, text.replacen("e-1", "e-1 junk", 1)).unwrap();
    let report = p(dir.path(), "report.txt");
    let (code, _) = opdyn(&["validate", "--in", &corrupt, "--out", &report]);
    assert_eq!(code, 2);
    let r = std::fs::read_to_string(&report).unwrap();
    assert!(r.contains("FAIL schema schema failure"), "{r}");
    assert_eq!(r.lines().filter(|l| l.starts_with("FAIL")).count(), 1, "{r}");
}

#[test]
fn validate_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let traj = p(dir.path(), "traj.txt");
    assert_eq!(opdyn(&["generate", "--out", &traj]).0, 0);
    let report = p(dir.path(), "report.txt");
    let (code, log) = opdyn(&["validate", "--in", &traj, "--out", &report]);
    assert_eq!(code, 0, "{log}");
    let r = std::fs::read_to_string(&report).unwrap();
    assert!(r.lines().skip(1).all(|l| l.starts_with("PASS")), "{r}");
    assert!(r.contains("PASS process_rows"));
}

#[test]
fn numerical_failures_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let traj = p(dir.path(), "traj.txt");
    assert_eq!(opdyn(&["generate", "--out", &traj]).0, 0);
    let ck = p(dir.path(), "model.ck");
    let mut args = vec!["train", "--in", &traj, "--out", &ck, "solver.max_steps=1"];
    args.extend_from_slice(FAST_TRAIN);
    let (code, log) = opdyn(&args);
    assert_eq!(code, 2, "{log}");
    // the history of a failed run is still written
    assert!(Path::new(&(ck + ".history")).exists());
}

#[test]
fn compare_identical_variants_reports_zero_difference() {
    let dir = tempfile::tempdir().unwrap();
    let traj = p(dir.path(), "traj.txt");
    assert_eq!(opdyn(&["generate", "--out", &traj]).0, 0);
    let report = p(dir.path(), "cmp.txt");
    let mut args = vec![
        "compare",
        "--in",
        &traj,
        "--out",
        &report,
        "compare.variants=fan,fan",
        "compare.spectrum_t_end=20",
    ];
    args.extend_from_slice(FAST_TRAIN);
    let (code, log) = opdyn(&args);
    assert_eq!(code, 0, "{log}");
    let r = std::fs::read_to_string(&report).unwrap();
    assert!(r.starts_with("opdyn-compare v1\n"));
    assert!(r.contains("diff.fan.fan=0.0000000000000000e0"), "{r}");
    let rows: Vec<&str> = r.lines().skip_while(|l| !l.starts_with("t drift_fan")).collect();
    assert_eq!(rows.len(), 1 + 151);
    let _ = PathBuf::new();
}
