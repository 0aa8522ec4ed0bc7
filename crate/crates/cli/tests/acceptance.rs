//! Acceptance suite A1-A10. Every criterion prints one PASS/FAIL line; the
//! test fails if any criterion fails.
//!
//! The training pipelines (A3, A4, A5, A9, A10) run the `opdyn` binary end to
//! end and take tens of minutes on one core.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use opdyn_core::exact::{
    exact_spectral_lines, generate_trajectory_with, measure_coefficient_via_state, process_matrix_row, Channel,
    EigenSystem, Observable, TfimSpec,
};
use opdyn_core::node::{batch_loss, integrate, loss_and_gradient, Network, NetworkSpec, SolverConfig, Variant, WindowBatch};
use opdyn_core::pauli::{enumerate_full_basis, SymmetryOperator, TruncationPolicy};
use opdyn_core::spectrum::{compare_peaks, match_lines, Peak, PeakList};
use opdyn_core::trajectory::Trajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// One bin of a 200-unit record.
const BIN_200: f64 = 2.0 * PI / 200.0;

/// Shared settings of the N = 3 runs. Predictions end at 199.9 so that the
/// stitched record has M = 2000 samples and span T = M dt = 200.
const N3_CONFIG: &str = "\
run.seed = 1
tfim.n_sites = 3
observable.expr = sum:X
grid.t_start = 0
grid.t_end = 5
grid.dt = 0.1
network.variant = fan
train.max_epochs = 3000
train.lr_decay = 0.999
train.patience = 3000
predict.t0 = 5
predict.t_end = 199.9
predict.dt = 0.1
";

/// Noisy N = 5 runs: bit-flip sector, light-cone window, time-gated network.
const N5_CONFIG: &str = "\
run.seed = 2
tfim.n_sites = 5
observable.expr = sum:X
truncation.mode = window
truncation.symmetry = true
truncation.sweep = true
grid.t_end = 5
noise.gamma = 0.05
noise.sigma = 0.01
noise.mode = relative
network.variant = fan_time
network.freq_max = 1
predict.t0 = 5
predict.t_end = 199.9
spectrum.f_min = 0.2
";

struct Report {
    lines: Vec<String>,
    failed: Vec<&'static str>,
}

impl Report {
    fn record(&mut self, id: &'static str, pass: bool, detail: String, elapsed: Duration) {
        let line = format!(
            "{id} {} {detail} ({:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        println!("{line}");
        self.lines.push(line);
        if !pass {
            self.failed.push(id);
        }
    }
}

fn opdyn(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_opdyn"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("run opdyn");
    let log = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(out.status.success(), "opdyn {args:?} failed:\n{log}");
    log
}

struct Dir {
    root: PathBuf,
    config: String,
}

impl Dir {
    fn new(root: &Path, name: &str, config: &str) -> Self {
        let root = root.join(name);
        std::fs::create_dir_all(&root).unwrap();
        let cfg = root.join("run.cfg");
        std::fs::write(&cfg, config).unwrap();
        Self {
            root,
            config: cfg.to_string_lossy().into_owned(),
        }
    }

    fn path(&self, name: &str) -> String {
        self.root.join(name).to_string_lossy().into_owned()
    }

    /// `opdyn <cmd> --config run.cfg [--in in] --out out overrides...`
    fn run(&self, cmd: &str, input: Option<&str>, out: &str, overrides: &[&str]) -> String {
        let input = input.map(|i| self.path(i));
        let out = self.path(out);
        let mut args = vec![cmd, "--config", &self.config];
        if let Some(i) = &input {
            args.extend(["--in", i]);
        }
        args.extend(["--out", &out]);
        args.extend_from_slice(overrides);
        opdyn(&args)
    }

    fn traj(&self, name: &str) -> Trajectory {
        Trajectory::load(self.path(name)).unwrap()
    }

    fn hash(&self, name: &str) -> Vec<u8> {
        Sha256::digest(std::fs::read(self.path(name)).unwrap()).to_vec()
    }
}

fn rel_l2(a: &Trajectory, b: &Trajectory, reference: &Trajectory) -> f64 {
    assert_eq!(a.n_times(), b.n_times(), "time grids differ");
    assert!(a.times().iter().zip(b.times()).all(|(x, y)| (x - y).abs() < 1e-9), "time grids differ");
    assert_eq!(a.basis(), b.basis(), "bases differ");
    let diff: f64 = a.coeffs().iter().zip(b.coeffs().iter()).map(|(x, y)| (x - y).powi(2)).sum();
    let norm: f64 = reference.coeffs().iter().map(|x| x * x).sum();
    (diff / norm).sqrt()
}

fn a1() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for n in [2usize, 3] {
        let eig = EigenSystem::new(&TfimSpec { n_sites: n, ..TfimSpec::default() }).unwrap();
        let o = Observable::uniform_sum(n, 'X').unwrap();
        let basis = enumerate_full_basis(n).unwrap().without_identity();
        for _ in 0..20 {
            let p = basis.elements()[rng.random_range(0..basis.len())];
            let t = rng.random_range(0.0..10.0);
            let traj = generate_trajectory_with(&eig, &o, &TruncationPolicy::full(false), &[t]).unwrap();
            let got = measure_coefficient_via_state(&eig, &o, &p, t, None, 0).unwrap();
            worst = worst.max((got - traj.column(&p).unwrap()[0]).abs());
        }
    }
    (worst < 1e-10, format!("max |measured - projected| = {worst:.1e} (tol 1e-10)"))
}

fn a2(dir: &Dir) -> (bool, String) {
    dir.run("generate", None, "a2_exact.txt", &["grid.t_end=200"]);
    let traj = dir.traj("a2_exact.txt");
    let s = SymmetryOperator::bit_flip(3);
    let c = traj.coeffs();
    let mut max_anti = 0.0f64;
    for (i, p) in traj.basis().elements().iter().enumerate() {
        if !p.commutes(s.generator()).unwrap() {
            max_anti = c.column(i).iter().fold(max_anti, |m, v| m.max(v.abs()));
        }
    }
    let norms: Vec<f64> = c.rows().into_iter().map(|r| r.dot(&r)).collect();
    let drift = norms.iter().fold(0.0f64, |m, x| m.max((x - norms[0]).abs()));
    (
        max_anti < 1e-12 && drift < 1e-9 && traj.n_series() == 63,
        format!(
            "{} series, max anticommuting |c| = {max_anti:.1e} (tol 1e-12), norm drift = {drift:.1e} (tol 1e-9)",
            traj.n_series()
        ),
    )
}

fn a6() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let solver = SolverConfig {
        rtol: 1e3,
        atol: 1e3,
        initial_step: 0.02,
        max_step: 0.02,
        max_steps: 100_000,
    };
    let dim = 5;
    let mut report = Vec::new();
    let mut pass = true;
    for variant in [Variant::Fcn, Variant::Fan, Variant::FanTime] {
        let mut spec = NetworkSpec::new(variant, dim).with_width(8);
        spec.frequencies = vec![0.4, 1.1, 2.5];
        spec.train_frequencies = variant != Variant::Fcn;
        spec.readout_gain = 1.0;
        let net = Network::init(spec, 6).unwrap();
        let batch = WindowBatch {
            t_start: vec![0.1, 0.7, 2.0],
            h0: Array2::from_shape_fn((3, dim), |_| rng.random_range(-0.5..0.5)),
            offsets: vec![0.1, 0.2, 0.3],
            targets: (0..3)
                .map(|_| Array2::from_shape_fn((3, dim), |_| rng.random_range(-0.5..0.5)))
                .collect(),
        };
        let (_, g) = loss_and_gradient(&net, &batch, &solver).unwrap();
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let k = rng.random_range(0..net.n_params());
            let eps = 1e-5;
            let mut p = net.params().to_vec();
            p[k] += eps;
            let mut plus = net.clone();
            plus.set_params(&p).unwrap();
            p[k] -= 2.0 * eps;
            let mut minus = net.clone();
            minus.set_params(&p).unwrap();
            let fd = (batch_loss(&plus, &batch, &solver).unwrap() - batch_loss(&minus, &batch, &solver).unwrap())
                / (2.0 * eps);
            worst = worst.max((g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-4 * scale));
        }
        pass &= worst < 1e-4;
        report.push(format!("{variant} {worst:.1e}"));
    }
    (pass, format!("max relative error per variant: {} (tol 1e-4)", report.join(", ")))
}

fn a7() -> (bool, String) {
    let closure = |rtol: f64| {
        let sol = integrate(
            |_, y, dy| {
                dy[0] = -y[1];
                dy[1] = y[0];
                Ok(())
            },
            &[1.0, 0.0],
            0.0,
            2.0 * PI,
            &SolverConfig::with_tolerance(rtol, rtol * 1e-2),
        )
        .unwrap();
        let y = sol.final_state();
        ((y[0] - 1.0).powi(2) + y[1].powi(2)).sqrt()
    };
    let errs: Vec<f64> = [1e-5, 1e-6, 1e-7, 1e-8].iter().map(|&r| closure(r)).collect();
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    (
        errs[3] < 100.0 * 1e-8 && monotone,
        format!(
            "closure error at rtol 1e-8 = {:.1e} (tol 1e-6); rtol 1e-5..1e-8 errors {:?} monotone={monotone}",
            errs[3],
            errs.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>()
        ),
    )
}

fn a8() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let eig = EigenSystem::new(&TfimSpec { n_sites: 2, ..TfimSpec::default() }).unwrap();
    let o = Observable::uniform_sum(2, 'X').unwrap();
    let basis = enumerate_full_basis(2).unwrap().without_identity();
    let gamma = 0.05;
    let (mut clean, mut noisy) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let t = rng.random_range(0.0..10.0);
        let traj = generate_trajectory_with(&eig, &o, &TruncationPolicy::full(false), &[t]).unwrap();
        let row = process_matrix_row(&eig, &o, &basis, t, Channel::Unitary).unwrap();
        let dep = process_matrix_row(&eig, &o, &basis, t, Channel::Depolarizing { gamma }).unwrap();
        for (k, p) in basis.elements().iter().enumerate() {
            clean = clean.max((row[k] - traj.column(p).unwrap()[0]).abs());
            noisy = noisy.max((dep[k] - (-gamma * t).exp() * row[k]).abs());
        }
    }
    (
        clean < 1e-10 && noisy < 1e-10,
        format!("unitary rows {clean:.1e}, depolarized rows {noisy:.1e} (tol 1e-10)"),
    )
}

fn describe_peaks(p: &[Peak]) -> String {
    let v: Vec<String> = p.iter().map(|p| format!("{:.3}", p.omega)).collect();
    format!("[{}]", v.join(" "))
}

/// Trains, predicts and takes spectra for the N = 3 task in `dir`.
fn n3_pipeline(dir: &Dir) {
    dir.run("generate", None, "data.txt", &[]);
    dir.run("train", Some("data.txt"), "fan.ck", &[]);
    let reference = format!("predict.reference={}", dir.path("data.txt"));
    dir.run("predict", Some("fan.ck"), "pred5.txt", &[&reference]);
    let prefix = format!("spectrum.prefix={}", dir.path("data.txt"));
    dir.run("spectrum", Some("pred5.txt"), "long.spec", &[&prefix]);
    dir.run("spectrum", Some("data.txt"), "short.spec", &[]);
}

fn a3(dir: &Dir, elapsed: Duration) -> (bool, String) {
    dir.run("generate", None, "exact.txt", &["grid.t_end=199.9"]);
    let exact = dir.traj("exact.txt");
    let pred = dir.traj("pred5.txt");
    let window = |t: &Trajectory| t.slice_time(5.0, 20.0).unwrap();
    let err = rel_l2(&window(&pred), &window(&exact), &window(&exact));

    let spec = TfimSpec::default();
    let eig = EigenSystem::new(&spec).unwrap();
    let lines = exact_spectral_lines(&eig, &Observable::uniform_sum(3, 'X').unwrap()).unwrap();
    let long = PeakList::load(dir.path("long.spec.peaks")).unwrap();
    let short = PeakList::load(dir.path("short.spec.peaks")).unwrap();
    let m_long = match_lines(&long, &lines, 0.05, BIN_200, -1.0);
    let m_short = match_lines(&short, &lines, 0.05, BIN_200, -1.0);
    let pass = err <= 0.20 && m_long.passes() && !m_short.passes() && elapsed <= Duration::from_secs(1800);
    (
        pass,
        format!(
            "rel L2 on [5,20] = {err:.4} (tol 0.20); stitched [0,200) peaks {} vs lines {:?}: missing {}, spurious {}; \
             training-window spectrum fails match = {} (resolution {:.3}); pipeline {:.0} s (limit 1800)",
            describe_peaks(&long.peaks),
            lines.iter().filter(|l| l.weight > 0.0).map(|l| format!("{:.3}", l.frequency)).collect::<Vec<_>>(),
            m_long.missing.len(),
            m_long.spurious.len(),
            !m_short.passes(),
            short.resolution,
            elapsed.as_secs_f64()
        ),
    )
}

/// Initial conditions come from the exact long trajectory, since t0 = 7 lies
/// beyond the training data.
fn a4(dir: &Dir) -> (bool, String) {
    let reference = format!("predict.reference={}", dir.path("exact.txt"));
    for t0 in ["3", "7"] {
        let t0_key = format!("predict.t0={t0}");
        dir.run("predict", Some("fan.ck"), &format!("pred{t0}.txt"), &[&reference, &t0_key, "predict.t_end=20"]);
    }
    let exact = dir.traj("exact.txt").slice_time(7.0, 20.0).unwrap();
    let preds: Vec<(&str, Trajectory)> = [("3", "pred3.txt"), ("5", "pred5.txt"), ("7", "pred7.txt")]
        .iter()
        .map(|(k, f)| (*k, dir.traj(f).slice_time(7.0, 20.0).unwrap()))
        .collect();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for i in 0..3 {
        for j in i + 1..3 {
            let d = rel_l2(&preds[i].1, &preds[j].1, &exact);
            worst = worst.max(d);
            parts.push(format!("t0={}/{}: {d:.4}", preds[i].0, preds[j].0));
        }
    }
    (worst <= 0.10, format!("pairwise rel L2 on [7,20]: {} (tol 0.10)", parts.join(", ")))
}

fn a5(root: &Path) -> (bool, String) {
    let start = Instant::now();
    let dir = Dir::new(root, "a5", N5_CONFIG);
    let log = dir.run("generate", None, "clean.txt", &[]);
    let counts: Vec<&str> = log
        .lines()
        .filter_map(|l| l.split_once("] ").map(|(_, m)| m))
        .filter(|m| m.starts_with("radius "))
        .collect();
    dir.run("noise", Some("clean.txt"), "noisy.txt", &[]);
    dir.run("train", Some("noisy.txt"), "model.ck", &[]);
    let reference = format!("predict.reference={}", dir.path("noisy.txt"));
    dir.run("predict", Some("model.ck"), "pred.txt", &[&reference]);
    let prefix = format!("spectrum.prefix={}", dir.path("noisy.txt"));
    dir.run("spectrum", Some("pred.txt"), "pred.spec", &[&prefix]);
    dir.run(
        "generate",
        None,
        "exact.txt",
        &["truncation.mode=full", "truncation.sweep=false", "grid.t_end=199.9"],
    );
    dir.run("spectrum", Some("exact.txt"), "exact.spec", &["truncation.mode=full"]);

    let f_min = 0.2 * 2.0 * PI;
    let above = |p: &PeakList| PeakList {
        peaks: p.peaks.iter().filter(|q| q.omega > f_min).copied().collect(),
        ..p.clone()
    };
    let exact = above(&PeakList::load(dir.path("exact.spec.peaks")).unwrap());
    let pred = above(&PeakList::load(dir.path("pred.spec.peaks")).unwrap());
    let cmp = compare_peaks(&exact, &pred, BIN_200);
    let n_series = dir.traj("clean.txt").n_series();
    let elapsed = start.elapsed();
    let pass = cmp.all_matched() && !exact.peaks.is_empty() && elapsed <= Duration::from_secs(7200);
    (
        pass,
        format!(
            "{n_series} series (reference count 52; sweep {:?}); peaks above f=0.2: exact {} predicted {}; \
             matched {}, max |delta omega| {:.4} (tol {:.4}); {:.0} s (limit 7200)",
            counts,
            describe_peaks(&exact.peaks),
            describe_peaks(&pred.peaks),
            cmp.matched.len(),
            cmp.max_abs_delta(),
            BIN_200,
            elapsed.as_secs_f64()
        ),
    )
}

fn a9(dir: &Dir) -> (bool, String, bool) {
    dir.run("train", Some("data.txt"), "fcn.ck", &["network.variant=fcn"]);
    let cks = format!("compare.checkpoints={},{}", dir.path("fcn.ck"), dir.path("fan.ck"));
    for out in ["compare_a.txt", "compare_b.txt"] {
        dir.run("compare", Some("data.txt"), out, &["compare.variants=fcn,fan", &cks, "compare.t_end=20"]);
    }
    let same = dir.hash("compare_a.txt") == dir.hash("compare_b.txt");
    let text = std::fs::read_to_string(dir.path("compare_a.txt")).unwrap();
    let summary: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("rel_l2.") || l.starts_with("diff.") || l.contains(".matched="))
        .collect();
    (same, format!("report deterministic = {same}; {}", summary.join(", ")), same)
}

fn a10(root: &Path, first: &Dir) -> (bool, String) {
    let second = Dir::new(root, "a10", N3_CONFIG);
    n3_pipeline(&second);
    let files = [
        "data.txt",
        "fan.ck",
        "pred5.txt",
        "long.spec",
        "long.spec.peaks",
        "short.spec",
        "short.spec.peaks",
    ];
    let differing: Vec<&str> = files
        .iter()
        .filter(|f| first.hash(f) != second.hash(f))
        .copied()
        .collect();
    (
        differing.is_empty(),
        format!("{} files compared by SHA-256, differing: {differing:?}", files.len()),
    )
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    println!();
    let mut report = Report {
        lines: Vec::new(),
        failed: Vec::new(),
    };

    let t = Instant::now();
    let (pass, detail) = a1();
    let el = t.elapsed();
    report.record("A1", pass && el < Duration::from_secs(10), detail, el);

    let n3 = Dir::new(root, "n3", N3_CONFIG);
    let t = Instant::now();
    let (pass, detail) = a2(&n3);
    report.record("A2", pass, detail, t.elapsed());

    let t = Instant::now();
    n3_pipeline(&n3);
    let pipeline = t.elapsed();
    let (a3_pass, detail) = a3(&n3, pipeline);
    report.record("A3", a3_pass, detail, t.elapsed());

    let t = Instant::now();
    let (pass, detail) = a4(&n3);
    report.record("A4", pass, detail, t.elapsed());

    let t = Instant::now();
    let (pass, detail) = a5(root);
    report.record("A5", pass, detail, t.elapsed());

    let t = Instant::now();
    let (pass, detail) = a6();
    report.record("A6", pass, detail, t.elapsed());

    let t = Instant::now();
    let (pass, detail) = a7();
    report.record("A7", pass, detail, t.elapsed());

    let t = Instant::now();
    let (pass, detail) = a8();
    report.record("A8", pass, detail, t.elapsed());

    let t = Instant::now();
    let (deterministic, detail, _) = a9(&n3);
    report.record("A9", deterministic && a3_pass, format!("{detail}; FAN passes A3 = {a3_pass}"), t.elapsed());

    let t = Instant::now();
    let (pass, detail) = a10(root, &n3);
    report.record("A10", pass, detail, t.elapsed());

    println!("\nacceptance summary:\n{}", report.lines.join("\n"));
    assert!(report.failed.is_empty(), "failed criteria: {:?}", report.failed);
}
