//! The pipeline commands.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use opdyn_core::exact::{generate_trajectory, generate_trajectory_with, EigenSystem};
use opdyn_core::node::{predict, train, Checkpoint, EpochRecord, Network, TrainFailure, Variant};
use opdyn_core::noise::apply_noise;
use opdyn_core::pauli::{radius_sweep, truncated_basis};
use opdyn_core::spectrum::{assemble_two_point, compare_peaks, fft_spectrum, find_peaks, find_peaks_above, PeakList, Spectrum, Window};
use opdyn_core::trajectory::{fmt17, grid_between, Metadata, Trajectory};

use crate::build;
use crate::config::RunConfig;

pub const HISTORY_HEADER: &str = "opdyn-history v1";
pub const COMPARE_HEADER: &str = "opdyn-compare v1";

fn require<'a>(p: Option<&'a Path>, flag: &str) -> Result<&'a Path> {
    p.ok_or_else(|| anyhow!("missing {flag} PATH"))
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Logs the resolved configuration and writes it next to `out`.
pub fn echo_config(cfg: &RunConfig, command: &str, out: Option<&Path>) -> Result<()> {
    let text = format!("# opdyn {command}\n{}", cfg.resolved_text());
    for line in text.lines() {
        info!("config: {line}");
    }
    if let Some(out) = out {
        let path = sidecar(out, ".config");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn generate(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let out = require(out, "--out")?;
    let spec = build::tfim(cfg)?;
    let o = build::observable(cfg, spec.n_sites)?;
    let policy = build::policy(cfg, &spec)?;
    let grid = build::grid(cfg)?;
    if cfg.get::<bool>("truncation.sweep")? {
        let max_r = spec.n_sites / 2;
        for (r, count) in radius_sweep(&policy, &o.strings(), 0..=max_r)? {
            info!("radius {r}: {count} basis strings");
        }
    }
    if let Some(r) = policy.suggested_radius(grid[grid.len() - 1] - grid[0]) {
        info!("light-cone radius for the grid span: {r}");
    }
    let tb = truncated_basis(&policy, &o.strings())?;
    info!(
        "basis: {} strings retained ({} in windows before symmetry filtering), policy {}",
        tb.count(),
        tb.windowed,
        policy.describe()
    );
    let traj = generate_trajectory(&spec, &o, &policy, &grid)?;
    traj.save(out).with_context(|| format!("writing {}", out.display()))?;
    info!("wrote {} rows x {} columns to {}", traj.n_times(), traj.n_series(), out.display());
    Ok(())
}

pub fn noise(cfg: &RunConfig, input: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let input = require(input, "--in")?;
    let out = require(out, "--out")?;
    let traj = Trajectory::load(input).with_context(|| format!("reading {}", input.display()))?;
    let model = build::noise(cfg)?;
    info!(
        "noise: p = {}, Gamma = {}, sigma = {} ({})",
        model.depolarizing_p(),
        model.gamma(),
        model.gaussian_sigma(),
        model.mode()
    );
    let noisy = apply_noise(&traj, &model)?;
    noisy.save(out).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut s = format!("{HISTORY_HEADER}\nepoch train_loss val_loss\n");
    for r in history {
        let _ = writeln!(s, "{} {} {}", r.epoch, fmt17(r.train_loss), fmt17(r.val_loss));
    }
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn history_path(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    Ok(cfg
        .get_auto::<PathBuf>("io.history")?
        .unwrap_or_else(|| sidecar(out, ".history")))
}

/// Trains the configured network (or `variant`) on `traj`.
pub fn train_model(cfg: &RunConfig, traj: &Trajectory, variant: Variant) -> Result<Checkpoint> {
    let tc = build::train_config(cfg)?;
    let solver = build::solver(cfg)?;
    let (net, prior) = match cfg.get_opt::<PathBuf>("train.resume")? {
        Some(path) => {
            let ck = Checkpoint::load(&path).with_context(|| format!("reading checkpoint {}", path.display()))?;
            if &ck.basis != traj.basis() {
                bail!("checkpoint {} was trained on a different basis", path.display());
            }
            info!("resuming from {} after {} epochs", path.display(), ck.history.len());
            (ck.network, ck.history)
        }
        None => {
            let spec = build::network_spec(cfg, variant, traj.n_series())?;
            (Network::init(spec, cfg.seed("network.seed")?)?, Vec::new())
        }
    };
    info!(
        "training {} ({} parameters) on {} series x {} samples",
        net.spec().variant,
        net.n_params(),
        traj.n_series(),
        traj.n_times()
    );
    let outcome = train(net, traj, &tc, &solver, &prior)?;
    info!(
        "stopped ({}) after {} epochs; best epoch {} with validation loss {:e}",
        outcome.stop,
        outcome.history.len(),
        outcome.best_epoch,
        outcome.best_val_loss
    );
    let mut meta = Metadata::new();
    meta.set("seed", tc.seed);
    meta.set("network_seed", cfg.seed("network.seed")?);
    meta.set("epochs_run", outcome.history.len());
    meta.set("best_epoch", outcome.best_epoch);
    meta.set("best_val_loss", fmt17(outcome.best_val_loss));
    meta.set("stop", outcome.stop);
    meta.set("batch_size", outcome.batch_size);
    meta.set("window_steps", tc.window_steps);
    for (k, v) in traj.meta().iter() {
        meta.set(format!("data.{k}"), v);
    }
    Ok(Checkpoint::new(outcome.network, traj.basis().clone(), meta, outcome.history)?)
}

pub fn train_cmd(cfg: &RunConfig, input: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let input = require(input, "--in")?;
    let out = require(out, "--out")?;
    let traj = Trajectory::load(input).with_context(|| format!("reading {}", input.display()))?;
    let hist = history_path(cfg, out)?;
    match train_model(cfg, &traj, build::variant(cfg)?) {
        Ok(ck) => {
            ck.save(out).with_context(|| format!("writing {}", out.display()))?;
            write_history(&hist, &ck.history)
        }
        Err(e) => {
            if let Some(f) = e.downcast_ref::<TrainFailure>() {
                write_history(&hist, &f.history)?;
            }
            Err(e)
        }
    }
}

/// Initial state at `t0` read from `reference`.
fn initial_state(reference: &Trajectory, t0: f64, basis: &opdyn_core::pauli::PauliBasis) -> Result<Vec<f64>> {
    let times = reference.times();
    let j = reference.time_index(t0).ok_or_else(|| {
        anyhow!(
            "t0 = {t0} is outside the reference data span [{}, {}] or not on its grid",
            times[0],
            times[times.len() - 1]
        )
    })?;
    let sub = reference.select_columns(basis).context("reference trajectory lacks checkpoint basis strings")?;
    Ok(sub.row(j).to_vec())
}

fn reference_path(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.get_opt::<PathBuf>("predict.reference")?
        .ok_or_else(|| anyhow!("predict.reference must name the trajectory that supplies h(t0)"))
}

pub fn predict_cmd(cfg: &RunConfig, input: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let input = require(input, "--in")?;
    let out = require(out, "--out")?;
    let ck = Checkpoint::load(input).with_context(|| format!("reading checkpoint {}", input.display()))?;
    let ref_path = reference_path(cfg)?;
    let reference = Trajectory::load(&ref_path).with_context(|| format!("reading {}", ref_path.display()))?;
    let t0: f64 = cfg.get("predict.t0")?;
    let h0 = initial_state(&reference, t0, &ck.basis)?;
    let grid = grid_between(t0, cfg.get("predict.t_end")?, cfg.get("predict.dt")?)?;
    let mut meta = reference.meta().clone();
    meta.set("checkpoint_best_epoch", ck.meta.get("best_epoch").unwrap_or("unknown"));
    let pred = predict(&ck.network, &h0, t0, &grid, &build::solver(cfg)?, &ck.basis, &meta)?;
    pred.save(out).with_context(|| format!("writing {}", out.display()))?;
    info!("predicted {} rows from t0 = {t0}", pred.n_times());
    Ok(())
}

/// Spectrum of the two-point function assembled from `traj`, optionally
/// preceded by `prefix` data and cut at `t_end`.
pub struct SpectrumRun {
    pub spectrum: Spectrum,
    pub peaks: PeakList,
    pub low_resolution: bool,
    pub series: Trajectory,
}

pub fn spectrum_of(cfg: &RunConfig, traj: &Trajectory, prefix: Option<&Trajectory>) -> Result<SpectrumRun> {
    let spec = build::tfim(cfg)?;
    let o = build::observable(cfg, spec.n_sites)?;
    let mut series = match prefix {
        Some(p) => p
            .select_columns(traj.basis())
            .context("prefix trajectory lacks the prediction basis")?
            .stitch(traj)?,
        None => traj.clone(),
    };
    if let Some(t_end) = cfg.get_opt::<f64>("spectrum.t_end")? {
        series = series.slice_time(series.times()[0], t_end)?;
    }
    let eig = EigenSystem::new(&spec)?;
    let c = assemble_two_point(&series, &eig, &o)?;
    let window: Window = cfg.get("spectrum.window")?;
    let spectrum = fft_spectrum(series.times(), &c, window)?;
    let threshold = cfg.get("spectrum.threshold")?;
    let peaks = match cfg.get_opt::<f64>("spectrum.f_min")? {
        Some(f) => find_peaks_above(&spectrum, threshold, 2.0 * std::f64::consts::PI * f)?,
        None => find_peaks(&spectrum, threshold)?,
    };
    let low_resolution = spectrum.is_low_resolution(cfg.get("spectrum.min_span")?);
    Ok(SpectrumRun {
        spectrum,
        peaks,
        low_resolution,
        series,
    })
}

pub fn spectrum_cmd(cfg: &RunConfig, input: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let input = require(input, "--in")?;
    let out = require(out, "--out")?;
    let traj = Trajectory::load(input).with_context(|| format!("reading {}", input.display()))?;
    let prefix = match cfg.get_opt::<PathBuf>("spectrum.prefix")? {
        Some(p) => Some(Trajectory::load(&p).with_context(|| format!("reading prefix {}", p.display()))?),
        None => None,
    };
    let run = spectrum_of(cfg, &traj, prefix.as_ref())?;
    if run.low_resolution {
        warn!(
            "span T = {} is below spectrum.min_span: broad, poorly resolved spectrum (resolution {})",
            run.spectrum.span(),
            run.spectrum.resolution()
        );
    }
    let mut meta = Metadata::new();
    meta.set("observable", cfg.raw("observable.expr"));
    meta.set("t_start", fmt17(run.series.times()[0]));
    meta.set("n_samples", run.series.n_times());
    meta.set("low_resolution", run.low_resolution);
    meta.set("prefix_samples", prefix.as_ref().map_or(0, |p| p.n_times()));
    meta.set("peak_f_min", cfg.raw("spectrum.f_min"));
    run.spectrum
        .save(out, &meta)
        .with_context(|| format!("writing {}", out.display()))?;
    let peaks_path = cfg
        .get_auto::<PathBuf>("io.peaks")?
        .unwrap_or_else(|| sidecar(out, ".peaks"));
    run.peaks
        .save(&peaks_path, &meta)
        .with_context(|| format!("writing {}", peaks_path.display()))?;
    info!(
        "{} peaks; gap estimate {:?} (resolution {})",
        run.peaks.peaks.len(),
        run.peaks.gap_estimate,
        run.spectrum.resolution()
    );
    Ok(())
}

pub fn compare_cmd(cfg: &RunConfig, input: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let input = require(input, "--in")?;
    let out = require(out, "--out")?;
    let data = Trajectory::load(input).with_context(|| format!("reading {}", input.display()))?;
    let variants: Vec<Variant> = cfg
        .raw("compare.variants")
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()?;
    if variants.is_empty() {
        bail!("compare.variants is empty");
    }
    let checkpoints: Option<Vec<PathBuf>> = cfg
        .get_opt::<String>("compare.checkpoints")?
        .map(|s| s.split(',').map(|p| PathBuf::from(p.trim())).collect());
    if let Some(c) = &checkpoints {
        if c.len() != variants.len() {
            bail!("compare.checkpoints needs one path per variant");
        }
    }
    let spec = build::tfim(cfg)?;
    let o = build::observable(cfg, spec.n_sites)?;
    let policy = build::policy(cfg, &spec)?;
    let eig = EigenSystem::new(&spec)?;
    let solver = build::solver(cfg)?;
    let t0: f64 = cfg.get("predict.t0")?;
    let dt: f64 = cfg.get("predict.dt")?;
    let t_end = cfg.get_auto::<f64>("compare.t_end")?.unwrap_or(cfg.get("predict.t_end")?);
    let spec_end: f64 = cfg.get("compare.spectrum_t_end")?;
    let long_grid = grid_between(t0, spec_end.max(t_end), dt)?;
    let exact = generate_trajectory_with(&eig, &o, &policy, &long_grid)?;
    if exact.basis() != data.basis() {
        bail!("configured truncation does not reproduce the data basis");
    }
    let h0 = initial_state(&exact, t0, data.basis())?;
    let n_drift = long_grid.iter().take_while(|&&t| t <= t_end + 1e-9).count();

    let mut preds = Vec::new();
    for (i, v) in variants.iter().enumerate() {
        let ck = match &checkpoints {
            Some(c) => Checkpoint::load(&c[i]).with_context(|| format!("reading {}", c[i].display()))?,
            None => train_model(cfg, &data, *v)?,
        };
        if ck.network.spec().variant != *v {
            bail!("checkpoint {i} holds a {} network, expected {v}", ck.network.spec().variant);
        }
        preds.push(predict(&ck.network, &h0, t0, &long_grid, &solver, data.basis(), &Metadata::new())?);
    }

    let mut rep = String::new();
    let names: Vec<String> = variants.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(rep, "{COMPARE_HEADER}");
    let _ = writeln!(rep, "variants={}", names.join(","));
    let _ = writeln!(rep, "t0={}", fmt17(t0));
    let _ = writeln!(rep, "t_end={}", fmt17(t_end));
    let drift = |p: &Trajectory, j: usize| -> f64 {
        p.row(j)
            .iter()
            .zip(exact.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let exact_sq: f64 = (0..n_drift).map(|j| exact.row(j).iter().map(|x| x * x).sum::<f64>()).sum();
    for (name, p) in names.iter().zip(&preds) {
        let err_sq: f64 = (0..n_drift).map(|j| drift(p, j).powi(2)).sum();
        let _ = writeln!(rep, "rel_l2.{name}={}", fmt17((err_sq / exact_sq).sqrt()));
    }
    for a in 0..preds.len() {
        for b in a + 1..preds.len() {
            let d: f64 = (0..n_drift)
                .map(|j| {
                    preds[a]
                        .row(j)
                        .iter()
                        .zip(preds[b].row(j).iter())
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                })
                .sum::<f64>()
                .sqrt();
            let _ = writeln!(rep, "diff.{}.{}={}", names[a], names[b], fmt17(d));
        }
    }

    // spectra over [grid start of the data, spectrum_t_end] against exact data
    let exact_full = data.stitch(&exact)?;
    let exact_run = spectrum_of(cfg, &exact_full, None)?;
    for (name, p) in names.iter().zip(&preds) {
        let run = spectrum_of(cfg, p, Some(&data))?;
        let cmp = compare_peaks(
            &exact_run.peaks,
            &run.peaks,
            exact_run.spectrum.resolution().max(run.spectrum.resolution()),
        );
        let _ = writeln!(rep, "spectrum.{name}.matched={}", cmp.matched.len());
        let _ = writeln!(rep, "spectrum.{name}.unmatched_exact={}", cmp.unmatched_a.len());
        let _ = writeln!(rep, "spectrum.{name}.unmatched_pred={}", cmp.unmatched_b.len());
        for (k, m) in cmp.matched.iter().enumerate() {
            let _ = writeln!(
                rep,
                "spectrum.{name}.peak.{k}={} {}",
                fmt17(m.a.omega),
                fmt17(m.delta)
            );
        }
    }

    let _ = writeln!(rep, "t {}", names.iter().map(|n| format!("drift_{n}")).collect::<Vec<_>>().join(" "));
    for j in 0..n_drift {
        let _ = write!(rep, "{}", fmt17(long_grid[j]));
        for p in &preds {
            let _ = write!(rep, " {}", fmt17(drift(p, j)));
        }
        let _ = writeln!(rep);
    }
    let mut f = std::fs::File::create(out).with_context(|| format!("writing {}", out.display()))?;
    f.write_all(rep.as_bytes())?;
    info!("comparison report written to {}", out.display());
    Ok(())
}
