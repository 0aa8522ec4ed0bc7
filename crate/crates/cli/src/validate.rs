//! `opdyn validate`: runs the oracle and invariant checks of every module
//! and, given `--in`, a schema check of a file.

use std::fmt::Write as _;
use std::io::Read as _;
use std::path::Path;

use anyhow::{Context, Result};
use ndarray::Array2;
use opdyn_core::exact::{
    exact_spectral_lines, generate_trajectory_with, measure_coefficient_via_state, process_matrix_row, Channel,
    EigenSystem, Observable, TfimSpec,
};
use opdyn_core::node::{integrate, loss_and_gradient, Checkpoint, Network, NetworkSpec, SolverConfig, Variant, WindowBatch};
use opdyn_core::pauli::{enumerate_full_basis, PauliString, SymmetryOperator, TruncationPolicy};
use opdyn_core::spectrum::{assemble_two_point, fft_spectrum, find_peaks, match_lines, PeakList, Window, PEAKS_HEADER, SPEC_HEADER};
use opdyn_core::trajectory::{grid_between, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, r: Result<(bool, String)>) -> Check {
    match r {
        Ok((pass, detail)) => Check { name, pass, detail },
        Err(e) => Check {
            name,
            pass: false,
            detail: format!("error: {e:#}"),
        },
    }
}

fn random_string(rng: &mut ChaCha8Rng, n: usize) -> PauliString {
    loop {
        let full = (1u64 << n) - 1;
        let p = PauliString::new(n, rng.random::<u64>() & full, rng.random::<u64>() & full).expect("masks fit");
        if !p.is_identity() {
            return p;
        }
    }
}

/// Products and commutation against dense matrices.
fn pauli_algebra(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut comm_ok = true;
    for _ in 0..50 {
        let a = random_string(rng, 3);
        let b = random_string(rng, 3);
        let (ph, c) = a.product(&b)?;
        let dense = a.to_matrix()? * b.to_matrix()?;
        let sym = c.to_matrix()? * ph.to_complex();
        worst = worst.max((dense.clone() - sym).norm());
        let anti = b.to_matrix()? * a.to_matrix()?;
        let commutes = (dense - anti).norm() < 1e-12;
        comm_ok &= commutes == a.commutes(&b)?;
    }
    Ok((worst < 1e-12 && comm_ok, format!("max product deviation {worst:.1e}")))
}

/// State-preparation measurement against projected coefficients.
fn measurement(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for n in [2usize, 3] {
        let eig = EigenSystem::new(&TfimSpec::new(n, 1.0))?;
        let o = Observable::uniform_sum(n, 'X')?;
        for _ in 0..20 {
            let p = random_string(rng, n);
            let t = rng.random_range(0.0..10.0);
            let traj = generate_trajectory_with(&eig, &o, &TruncationPolicy::full(false), &[t])?;
            let c = traj.column(&p).map(|c| c[0]).unwrap_or(0.0);
            let m = measure_coefficient_via_state(&eig, &o, &p, t, None, 0)?;
            worst = worst.max((c - m).abs());
        }
    }
    Ok((worst < 1e-10, format!("max deviation {worst:.1e}")))
}

/// Anticommuting-sector coefficients vanish and the squared norm is constant.
fn symmetry_conservation() -> Result<(bool, String)> {
    let eig = EigenSystem::new(&TfimSpec::new(3, 1.0))?;
    let o = Observable::uniform_sum(3, 'X')?;
    let traj = generate_trajectory_with(&eig, &o, &TruncationPolicy::full(false), &grid_between(0.0, 20.0, 0.1)?)?;
    let s = SymmetryOperator::bit_flip(3);
    let anti: Vec<usize> = traj
        .basis()
        .elements()
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.commutes(s.generator()).unwrap_or(true))
        .map(|(i, _)| i)
        .collect();
    let c = traj.coeffs();
    let max_anti = anti
        .iter()
        .flat_map(|&i| c.column(i).to_vec())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let norms: Vec<f64> = c.rows().into_iter().map(|r| r.dot(&r)).collect();
    let drift = norms.iter().fold(0.0f64, |m, x| m.max((x - norms[0]).abs()));
    Ok((
        max_anti < 1e-12 && drift < 1e-9,
        format!("max anticommuting {max_anti:.1e}, norm drift {drift:.1e}"),
    ))
}

/// Process-matrix rows against trajectory rows, clean and depolarized.
fn process_rows(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let eig = EigenSystem::new(&TfimSpec::new(2, 1.0))?;
    let o = Observable::uniform_sum(2, 'X')?;
    let basis = enumerate_full_basis(2)?.without_identity();
    let gamma = 0.05;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let t = rng.random_range(0.0..10.0);
        let traj = generate_trajectory_with(&eig, &o, &TruncationPolicy::full(false), &[t])?;
        let row = process_matrix_row(&eig, &o, &basis, t, Channel::Unitary)?;
        let noisy = process_matrix_row(&eig, &o, &basis, t, Channel::Depolarizing { gamma })?;
        let decay = (-gamma * t).exp();
        for (k, p) in basis.elements().iter().enumerate() {
            let c = traj.column(p).map(|c| c[0]).unwrap_or(0.0);
            worst = worst.max((row[k] - c).abs()).max((noisy[k] - decay * row[k]).abs());
        }
    }
    Ok((worst < 1e-10, format!("max deviation {worst:.1e}")))
}

/// Rotation returns to its start after one period.
fn solver_rotation() -> Result<(bool, String)> {
    let rtol = 1e-8;
    let cfg = SolverConfig::with_tolerance(rtol, rtol * 1e-2);
    let sol = integrate(
        |_, y, dy| {
            dy[0] = -y[1];
            dy[1] = y[0];
            Ok(())
        },
        &[1.0, 0.0],
        0.0,
        2.0 * std::f64::consts::PI,
        &cfg,
    )?;
    let y = sol.final_state();
    let err = ((y[0] - 1.0).powi(2) + y[1].powi(2)).sqrt();
    Ok((err < 100.0 * rtol, format!("closure error {err:.1e}")))
}

/// Reverse-mode gradients against central differences for each variant.
fn gradients(rng: &mut ChaCha8Rng, seed: u64) -> Result<(bool, String)> {
    let solver = SolverConfig {
        rtol: 1e3,
        atol: 1e3,
        initial_step: 0.025,
        max_step: 0.025,
        max_steps: 100_000,
    };
    let dim = 4;
    let batch = WindowBatch {
        t_start: vec![0.3, 1.1],
        h0: Array2::from_shape_fn((2, dim), |_| rng.random_range(-0.5..0.5)),
        offsets: vec![0.1, 0.2],
        targets: (0..2)
            .map(|_| Array2::from_shape_fn((2, dim), |_| rng.random_range(-0.5..0.5)))
            .collect(),
    };
    let mut worst = 0.0f64;
    for variant in [Variant::Fcn, Variant::Fan, Variant::FanTime] {
        let mut spec = NetworkSpec::new(variant, dim).with_width(8);
        spec.frequencies = vec![0.5, 1.0, 2.0];
        spec.readout_gain = 1.0;
        let net = Network::init(spec, seed)?;
        let (_, g) = loss_and_gradient(&net, &batch, &solver)?;
        // entries far below the gradient scale are compared on that scale
        let floor = 1e-4 * g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for _ in 0..50 {
            let k = rng.random_range(0..net.n_params());
            let eps = 1e-5 * net.params()[k].abs().max(1.0);
            let mut p = net.params().to_vec();
            p[k] += eps;
            let mut plus = net.clone();
            plus.set_params(&p)?;
            p[k] -= 2.0 * eps;
            let mut minus = net.clone();
            minus.set_params(&p)?;
            let fd = (opdyn_core::node::batch_loss(&plus, &batch, &solver)?
                - opdyn_core::node::batch_loss(&minus, &batch, &solver)?)
                / (2.0 * eps);
            let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(floor).max(1e-300);
            worst = worst.max(rel);
        }
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.1e}")))
}

/// FFT peaks of the exact long-time two-point function against ED lines.
fn spectral_lines(cfg: &RunConfig) -> Result<(bool, String)> {
    let spec = crate::build::tfim(cfg)?;
    let o = crate::build::observable(cfg, spec.n_sites)?;
    let eig = EigenSystem::new(&spec)?;
    let grid = grid_between(0.0, 199.9, 0.1)?;
    let traj = generate_trajectory_with(&eig, &o, &TruncationPolicy::full(false), &grid)?;
    let c = assemble_two_point(&traj, &eig, &o)?;
    let s = fft_spectrum(traj.times(), &c, Window::Rectangular)?;
    let peaks = find_peaks(&s, cfg.get("spectrum.threshold")?)?;
    let lines = exact_spectral_lines(&eig, &o)?;
    let m = match_lines(&peaks, &lines, 0.05, s.resolution(), -1.0);
    Ok((
        m.passes(),
        format!(
            "{} lines matched, {} missing, {} spurious peaks",
            m.matched.len(),
            m.missing.len(),
            m.spurious.len()
        ),
    ))
}

/// Parses `path` according to its header line.
pub fn schema(path: &Path) -> Result<(bool, String)> {
    let mut head = Vec::new();
    std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .take(64)
        .read_to_end(&mut head)?;
    let first = String::from_utf8_lossy(&head);
    let first = first.lines().next().unwrap_or("");
    let result: std::result::Result<String, String> = if head.starts_with(b"OPDYNCK1") {
        Checkpoint::load(path)
            .map(|c| format!("checkpoint, {} parameters", c.network.n_params()))
            .map_err(|e| e.to_string())
    } else if first == opdyn_core::trajectory::TRAJ_HEADER {
        Trajectory::load(path)
            .map(|t| format!("trajectory, {} rows x {} series", t.n_times(), t.n_series()))
            .map_err(|e| e.to_string())
    } else if first == PEAKS_HEADER {
        PeakList::load(path)
            .map(|p| format!("peaks, {} entries", p.peaks.len()))
            .map_err(|e| e.to_string())
    } else if first == SPEC_HEADER {
        Ok("spectrum (header checked)".to_string())
    } else {
        Err(format!("unrecognized header {first:?}"))
    };
    Ok(match result {
        Ok(d) => (true, d),
        Err(e) => (false, format!("schema failure: {e}")),
    })
}

pub fn run_checks(cfg: &RunConfig, input: Option<&Path>) -> Result<Vec<Check>> {
    let seed = cfg.seed("validate.seed")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = vec![
        check("pauli_algebra", pauli_algebra(&mut rng)),
        check("measurement_equivalence", measurement(&mut rng)),
        check("symmetry_conservation", symmetry_conservation()),
        check("process_rows", process_rows(&mut rng)),
        check("solver_rotation", solver_rotation()),
        check("gradients", gradients(&mut rng, seed)),
        check("spectral_lines", spectral_lines(cfg)),
    ];
    if let Some(p) = input {
        checks.push(check("schema", schema(p)));
    }
    Ok(checks)
}

pub fn report(checks: &[Check]) -> String {
    let mut s = String::from("opdyn-validate v1\n");
    for c in checks {
        let _ = writeln!(s, "{} {} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    s
}
