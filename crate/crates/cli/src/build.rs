//! Typed objects built from a [`RunConfig`].

use anyhow::{bail, Context, Result};
use opdyn_core::exact::{Observable, TfimSpec};
use opdyn_core::node::{log_spaced, NetworkSpec, SolverConfig, TrainConfig, Variant};
use opdyn_core::noise::{NoiseMode, NoiseModel};
use opdyn_core::pauli::{TruncationMode, TruncationPolicy};
use opdyn_core::trajectory::grid_between;

use crate::config::RunConfig;

pub fn tfim(cfg: &RunConfig) -> Result<TfimSpec> {
    Ok(TfimSpec {
        n_sites: cfg.get("tfim.n_sites")?,
        coupling: cfg.get("tfim.coupling")?,
        field: cfg.get("tfim.field")?,
        sign_convention: cfg.get("tfim.sign_convention")?,
        boundary: cfg.get("tfim.boundary")?,
    })
}

pub fn observable(cfg: &RunConfig, n_sites: usize) -> Result<Observable> {
    let expr = cfg.raw("observable.expr");
    Observable::parse(expr, n_sites).with_context(|| format!("observable.expr = {expr:?}"))
}

pub fn policy(cfg: &RunConfig, spec: &TfimSpec) -> Result<TruncationPolicy> {
    let mode = match cfg.raw("truncation.mode") {
        "full" => TruncationMode::Full,
        "window" => TruncationMode::Window,
        other => bail!("truncation.mode must be full or window, got {other:?}"),
    };
    Ok(TruncationPolicy {
        mode,
        window_radius: cfg.get("truncation.radius")?,
        velocity: cfg.get_opt("truncation.velocity")?,
        symmetry_filter: cfg.get("truncation.symmetry")?,
        periodic: spec.boundary == opdyn_core::exact::Boundary::Periodic,
    })
}

pub fn grid(cfg: &RunConfig) -> Result<Vec<f64>> {
    Ok(grid_between(cfg.get("grid.t_start")?, cfg.get("grid.t_end")?, cfg.get("grid.dt")?)?)
}

pub fn noise(cfg: &RunConfig) -> Result<NoiseModel> {
    let dt: f64 = cfg.get("noise.trotter_dt")?;
    let sigma: f64 = cfg.get("noise.sigma")?;
    let mode: NoiseMode = cfg.get("noise.mode")?;
    let seed = cfg.seed("noise.seed")?;
    Ok(match cfg.get_opt::<f64>("noise.gamma")? {
        Some(gamma) => NoiseModel::from_gamma(gamma, dt, sigma, mode, seed)?,
        None => NoiseModel::new(cfg.get("noise.p")?, dt, sigma, mode, seed)?,
    })
}

pub fn variant(cfg: &RunConfig) -> Result<Variant> {
    cfg.get("network.variant")
}

/// Upper end of the frequency span when `network.freq_max = auto`: 1 for
/// the data-frequency FAN (its arguments are bounded hidden activations),
/// 1000 for the time-gated variant.
pub fn default_freq_max(variant: Variant) -> f64 {
    match variant {
        Variant::FanTime => 1000.0,
        _ => 1.0,
    }
}

pub fn network_spec(cfg: &RunConfig, variant: Variant, state_dim: usize) -> Result<NetworkSpec> {
    let width: usize = cfg.get("network.width")?;
    let mut spec = NetworkSpec::new(variant, state_dim).with_width(width);
    if let Some(p) = cfg.get_auto::<String>("network.partition")? {
        let parts: Vec<usize> = p
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("network.partition = {p:?}"))?;
        if parts.len() != 3 {
            bail!("network.partition needs three comma-separated values");
        }
        spec.fan_partition = (parts[0], parts[1], parts[2]);
    }
    spec.depth = cfg.get("network.depth")?;
    let fmin: f64 = cfg.get("network.freq_min")?;
    let fmax = cfg.get_auto::<f64>("network.freq_max")?.unwrap_or(default_freq_max(variant));
    spec.frequencies = log_spaced(fmin, fmax, cfg.get("network.n_freq")?);
    spec.train_frequencies = cfg.get("network.train_frequencies")?;
    spec.append_time = cfg.get("network.append_time")?;
    spec.readout_gain = cfg.get("network.readout_gain")?;
    spec.validate()?;
    Ok(spec)
}

pub fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    let tc = TrainConfig {
        batch_size: cfg.get("train.batch_size")?,
        window_steps: cfg.get("train.window_steps")?,
        learning_rate: cfg.get("train.learning_rate")?,
        lr_decay: cfg.get("train.lr_decay")?,
        max_epochs: cfg.get("train.max_epochs")?,
        patience: cfg.get("train.patience")?,
        validation_fraction: cfg.get("train.validation_fraction")?,
        grad_clip: cfg.get("train.grad_clip")?,
        seed: cfg.seed("train.seed")?,
    };
    tc.validate()?;
    Ok(tc)
}

pub fn solver(cfg: &RunConfig) -> Result<SolverConfig> {
    let s = SolverConfig {
        rtol: cfg.get("solver.rtol")?,
        atol: cfg.get("solver.atol")?,
        initial_step: cfg.get("solver.initial_step")?,
        max_step: cfg.get("solver.max_step")?,
        max_steps: cfg.get("solver.max_steps")?,
    };
    s.validate()?;
    Ok(s)
}
