//! Windowed training of a vector-field network on one coefficient trajectory,
//! and long-time prediction from an initial condition.

use std::fmt;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use super::solver::{integrate, integrate_recorded, reverse_sweep, SolverConfig};
use crate::error::{Error, Result};
use crate::trajectory::{Metadata, Trajectory};

/// Sum of squared differences over all times and series.
pub fn trajectory_loss(pred: &Trajectory, target: &Trajectory) -> Result<f64> {
    if pred.basis() != target.basis() {
        return Err(Error::InvalidArgument("loss needs identical bases".into()));
    }
    if pred.n_times() != target.n_times()
        || pred
            .times()
            .iter()
            .zip(target.times())
            .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
    {
        return Err(Error::InvalidArgument("loss needs aligned time grids".into()));
    }
    Ok(pred
        .coeffs()
        .iter()
        .zip(target.coeffs().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub window_steps: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate factor applied after every epoch.
    pub lr_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            window_steps: 10,
            learning_rate: 1e-3,
            lr_decay: 1.0,
            max_epochs: 500,
            patience: 50,
            validation_fraction: 0.2,
            grad_clip: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.batch_size == 0 || self.window_steps == 0 {
            return bad("batch_size and window_steps must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must be in (0, 1]");
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must be in [0, 1)");
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip must be non-negative");
        }
        Ok(())
    }
}

/// A batch of windows sharing the same relative output times.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    /// Absolute start time of each window.
    pub t_start: Vec<f64>,
    /// `B x D` start states.
    pub h0: Array2<f64>,
    /// Output times relative to the window start, increasing.
    pub offsets: Vec<f64>,
    /// `targets[k]` is the `B x D` block of observed states at `offsets[k]`.
    pub targets: Vec<Array2<f64>>,
}

impl WindowBatch {
    /// Windows starting at grid indices `starts`, each covering the next
    /// `steps` samples. The grid must be uniform.
    pub fn from_trajectory(traj: &Trajectory, starts: &[usize], steps: usize) -> Result<Self> {
        let dt = traj
            .uniform_step()
            .ok_or_else(|| Error::InvalidArgument("training needs a uniform time grid".into()))?;
        if starts.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if let Some(&j) = starts.iter().find(|&&j| j + steps >= traj.n_times()) {
            return Err(Error::InvalidArgument(format!(
                "window at index {j} with {steps} steps exceeds {} samples",
                traj.n_times()
            )));
        }
        let c = traj.coeffs();
        Ok(Self {
            t_start: starts.iter().map(|&j| traj.times()[j]).collect(),
            h0: c.select(Axis(0), starts),
            offsets: (1..=steps).map(|k| k as f64 * dt).collect(),
            targets: (1..=steps)
                .map(|k| {
                    let idx: Vec<usize> = starts.iter().map(|j| j + k).collect();
                    c.select(Axis(0), &idx)
                })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.t_start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_start.is_empty()
    }

    fn n_terms(&self) -> usize {
        self.h0.len() * self.offsets.len()
    }
}

fn batch_field<'a>(
    net: &'a Network,
    t_start: &'a [f64],
    dim: usize,
) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + 'a {
    let mut times = vec![0.0; t_start.len()];
    move |tau, y, dy| {
        for (t, s) in times.iter_mut().zip(t_start) {
            *t = s + tau;
        }
        let x = ArrayView2::from_shape((t_start.len(), dim), y).expect("batch shape");
        let out = net.forward(&times, x)?;
        dy.copy_from_slice(out.as_slice().expect("contiguous"));
        Ok(())
    }
}

/// Mean squared error of the integrated windows against their targets.
pub fn batch_loss(net: &Network, batch: &WindowBatch, solver: &SolverConfig) -> Result<f64> {
    let dim = batch.h0.ncols();
    let y0 = batch.h0.as_standard_layout().to_owned();
    let tape = integrate_recorded(
        batch_field(net, &batch.t_start, dim),
        y0.as_slice().expect("contiguous"),
        0.0,
        &batch.offsets,
        solver,
    )?;
    let mut sum = 0.0;
    for (out, target) in tape.outputs.iter().zip(&batch.targets) {
        for (p, q) in out.iter().zip(target.iter()) {
            sum += (p - q) * (p - q);
        }
    }
    Ok(sum / batch.n_terms() as f64)
}

/// Loss and its exact gradient through the discrete solver steps.
pub fn loss_and_gradient(net: &Network, batch: &WindowBatch, solver: &SolverConfig) -> Result<(f64, Vec<f64>)> {
    let dim = batch.h0.ncols();
    let b = batch.len();
    let y0 = batch.h0.as_standard_layout().to_owned();
    let tape = integrate_recorded(
        batch_field(net, &batch.t_start, dim),
        y0.as_slice().expect("contiguous"),
        0.0,
        &batch.offsets,
        solver,
    )?;
    let norm = 1.0 / batch.n_terms() as f64;
    let mut sum = 0.0;
    let mut cot = Vec::with_capacity(tape.outputs.len());
    for (out, target) in tape.outputs.iter().zip(&batch.targets) {
        let mut c = vec![0.0; out.len()];
        for ((ci, p), q) in c.iter_mut().zip(out).zip(target.iter()) {
            let r = p - q;
            sum += r * r;
            *ci = 2.0 * r * norm;
        }
        cot.push(c);
    }
    let mut grad = vec![0.0; net.n_params()];
    let mut times = vec![0.0; b];
    reverse_sweep(&tape, &cot, |tau, s, k_bar, s_bar| {
        for (t, t0) in times.iter_mut().zip(&batch.t_start) {
            *t = t0 + tau;
        }
        let x = ArrayView2::from_shape((b, dim), s).expect("batch shape");
        let (_, cache) = net.forward_cached(&times, x)?;
        let kb = ArrayView2::from_shape((b, dim), k_bar).expect("batch shape");
        let xb = net.backward(&cache, kb, &mut grad);
        for (sb, v) in s_bar.iter_mut().zip(xb.iter()) {
            *sb += v;
        }
        Ok(())
    })?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((sum * norm, grad))
}

/// First-order adaptive-moment optimizer.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStopping => "early_stopping",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub network: Network,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop: StopReason,
    /// Windows actually used per batch after clamping.
    pub batch_size: usize,
}

/// Training aborted on a numerical failure; carries the history so far.
#[derive(Debug)]
pub struct TrainFailure {
    pub history: Vec<EpochRecord>,
    pub error: Error,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training aborted after {} epochs: {}", self.history.len(), self.error)
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

const SPLIT_SALT: u64 = 0x5eed_5917;

/// Seeded split of window start indices into (train, validation).
pub fn split_windows(n_windows: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n_windows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
    idx.shuffle(&mut rng);
    let n_val = ((n_windows as f64 * validation_fraction).round() as usize).min(n_windows.saturating_sub(1));
    let mut val = idx.split_off(n_windows - n_val);
    idx.sort_unstable();
    val.sort_unstable();
    (idx, val)
}

/// Trains `net` on windows of `traj`. `prior` continues an earlier history
/// (epoch numbering resumes after its last entry).
pub fn train(
    net: Network,
    traj: &Trajectory,
    cfg: &TrainConfig,
    solver: &SolverConfig,
    prior: &[EpochRecord],
) -> std::result::Result<TrainOutcome, TrainFailure> {
    let fail = |history: &[EpochRecord], error: Error| TrainFailure {
        history: history.to_vec(),
        error,
    };
    let mut history = prior.to_vec();
    cfg.validate().map_err(|e| fail(&history, e))?;
    solver.validate().map_err(|e| fail(&history, e))?;
    if net.spec().state_dim != traj.n_series() {
        return Err(fail(
            &history,
            Error::SizeMismatch {
                expected: net.spec().state_dim,
                got: traj.n_series(),
            },
        ));
    }
    if traj.n_times() <= cfg.window_steps {
        return Err(fail(
            &history,
            Error::InvalidArgument(format!(
                "trajectory with {} samples is too short for windows of {} steps",
                traj.n_times(),
                cfg.window_steps
            )),
        ));
    }
    let n_windows = traj.n_times() - cfg.window_steps;
    let (train_idx, val_idx) = split_windows(n_windows, cfg.validation_fraction, cfg.seed);
    let batch_size = cfg.batch_size.min(train_idx.len());
    if batch_size < cfg.batch_size {
        log::info!(
            "batch size clamped from {} to {} available training windows",
            cfg.batch_size,
            batch_size
        );
    }
    let monitor = if val_idx.is_empty() { &train_idx } else { &val_idx };
    let monitor_batch = WindowBatch::from_trajectory(traj, monitor, cfg.window_steps).map_err(|e| fail(&history, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = net.params().to_vec();
    let mut work = net.clone();
    let mut opt = Adam::new(params.len());
    let mut best = net.clone();
    let mut best_val = batch_loss(&work, &monitor_batch, solver).map_err(|e| fail(&history, e))?;
    let first_epoch = history.last().map_or(0, |r| r.epoch + 1);
    let mut best_epoch = first_epoch.saturating_sub(1);
    let mut lr = cfg.learning_rate;
    let mut since_best = 0;
    let mut stop = StopReason::MaxEpochs;
    let mut order = train_idx.clone();

    for epoch in first_epoch..first_epoch + cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(batch_size) {
            let batch = WindowBatch::from_trajectory(traj, chunk, cfg.window_steps).map_err(|e| fail(&history, e))?;
            let (loss, mut grad) = loss_and_gradient(&work, &batch, solver).map_err(|e| fail(&history, e))?;
            if cfg.grad_clip > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.grad_clip {
                    let f = cfg.grad_clip / norm;
                    grad.iter_mut().for_each(|g| *g *= f);
                }
            }
            opt.update(&mut params, &grad, lr);
            work.set_params(&params).map_err(|e| fail(&history, e))?;
            train_sum += loss;
            n_batches += 1;
        }
        let val_loss = batch_loss(&work, &monitor_batch, solver).map_err(|e| fail(&history, e))?;
        let train_loss = train_sum / n_batches as f64;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(fail(&history, Error::NonFinite(format!("loss at epoch {epoch}"))));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if epoch % 100 == 0 {
            log::info!("epoch {epoch}: train {train_loss:.3e} val {val_loss:.3e}");
        } else {
            log::debug!("epoch {epoch}: train {train_loss:.3e} val {val_loss:.3e}");
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = work.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stop = StopReason::EarlyStopping;
                break;
            }
        }
        lr *= cfg.lr_decay;
    }
    Ok(TrainOutcome {
        network: best,
        history,
        best_epoch,
        best_val_loss: best_val,
        stop,
        batch_size,
    })
}

/// Integrates the learned field from `(t0, h0)` and samples it on `grid`,
/// which must lie in `[t0, inf)`.
pub fn predict(
    net: &Network,
    h0: &[f64],
    t0: f64,
    grid: &[f64],
    solver: &SolverConfig,
    basis: &crate::pauli::PauliBasis,
    meta: &Metadata,
) -> Result<Trajectory> {
    if h0.len() != net.spec().state_dim || basis.len() != h0.len() {
        return Err(Error::SizeMismatch {
            expected: net.spec().state_dim,
            got: h0.len(),
        });
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty prediction grid".into()));
    }
    let slack = 1e-9 * (1.0 + t0.abs());
    if grid.iter().any(|&t| t < t0 - slack) {
        return Err(Error::InvalidArgument(format!("prediction grid starts before t0 = {t0}")));
    }
    let t_end = grid.iter().cloned().fold(t0, f64::max);
    let dim = h0.len();
    let sol = integrate(batch_field(net, &[0.0], dim), h0, t0, t_end, solver)?;
    let mut coeffs = Array2::zeros((grid.len(), dim));
    for (j, &t) in grid.iter().enumerate() {
        let y = if (t - t0).abs() <= slack { h0.to_vec() } else { sol.eval(t)? };
        coeffs.row_mut(j).assign(&ndarray::ArrayView1::from(&y));
    }
    let mut meta = meta.clone();
    meta.set("t0", t0);
    meta.set("network", net.spec().variant);
    meta.set("solver.rtol", solver.rtol);
    meta.set("solver.atol", solver.atol);
    Trajectory::new(grid.to_vec(), basis.clone(), coeffs, meta)
}
