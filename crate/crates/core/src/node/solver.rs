//! Dormand-Prince 5(4) integrator with PI step control, dense output, and a
//! recorded mode whose discrete steps can be differentiated in reverse.

use crate::error::{Error, Result};

/// Tolerances and step limits of the adaptive integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
            initial_step: 0.01,
            max_step: f64::INFINITY,
            max_steps: 200_000,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerance(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidArgument("rtol and atol must be positive".into()));
        }
        if !(self.initial_step > 0.0 && self.max_step > 0.0) {
            return Err(Error::InvalidArgument("initial_step and max_step must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Fifth-order weights (the last row of `A`; stage 7 carries zero weight).
const B: [f64; 6] = A[6];

/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Coefficients of the fourth-order continuous extension.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("vector field".into()))
    }
}

/// Stage buffers for one Dormand-Prince step. `k[0]` must hold `f(t, y)`
/// before [`Stepper::attempt`]; after an accepted step `k[6]` is `f` at the
/// new point (first-same-as-last).
struct Stepper {
    k: [Vec<f64>; 7],
    stage_in: [Vec<f64>; 7],
    y_new: Vec<f64>,
}

impl Stepper {
    fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            stage_in: std::array::from_fn(|_| vec![0.0; dim]),
            y_new: vec![0.0; dim],
        }
    }

    /// Fills stages 2..7 and `y_new`; returns the scaled error norm.
    fn attempt<F>(&mut self, f: &mut F, t: f64, y: &[f64], h: f64, cfg: &SolverConfig) -> Result<f64>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let dim = y.len();
        self.stage_in[0].copy_from_slice(y);
        for s in 1..7 {
            let (done, rest) = self.k.split_at_mut(s);
            let input = &mut self.stage_in[s];
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in done.iter().enumerate() {
                    acc += A[s][j] * kj[i];
                }
                input[i] = y[i] + h * acc;
            }
            f(t + C[s] * h, input, &mut rest[0])?;
            check_finite(&rest[0])?;
        }
        // stage 7 input is the fifth-order solution
        self.y_new.copy_from_slice(&self.stage_in[6]);
        let mut sum = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * self.k[s][i];
            }
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(self.y_new[i].abs());
            let r = h * e / sc;
            sum += r * r;
        }
        let err = (sum / dim.max(1) as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::NonFinite("error estimate".into()));
        }
        Ok(err)
    }

    fn dense_segment(&self, t: f64, h: f64, y: &[f64]) -> Segment {
        let dim = y.len();
        let mut r = [
            y.to_vec(),
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
        ];
        for i in 0..dim {
            let dy = self.y_new[i] - y[i];
            let bspl = h * self.k[0][i] - dy;
            r[1][i] = dy;
            r[2][i] = bspl;
            r[3][i] = dy - h * self.k[6][i] - bspl;
            let mut d = 0.0;
            for s in 0..7 {
                d += D[s] * self.k[s][i];
            }
            r[4][i] = h * d;
        }
        Segment { t, h, r }
    }
}

/// PI step-size controller.
struct Controller {
    err_old: f64,
    last_rejected: bool,
}

impl Controller {
    fn new() -> Self {
        Self {
            err_old: 1e-4,
            last_rejected: false,
        }
    }

    /// Next step size after an attempt with scaled error `err`.
    fn next(&mut self, h: f64, err: f64, accepted: bool) -> f64 {
        let expo = 0.2 - BETA * 0.75;
        let fac11 = err.max(1e-300).powf(expo);
        if accepted {
            let mut fac = fac11 / self.err_old.powf(BETA) / SAFETY;
            fac = fac.clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            if self.last_rejected {
                fac = fac.max(1.0);
            }
            self.err_old = err.max(1e-4);
            self.last_rejected = false;
            h / fac
        } else {
            self.last_rejected = true;
            h / (fac11 / SAFETY).min(1.0 / FAC_MIN)
        }
    }
}

#[derive(Debug, Clone)]
struct Segment {
    t: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl Segment {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t) / self.h;
        let th1 = 1.0 - th;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.r[0][i]
                + th * (self.r[1][i] + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
    }
}

/// Continuous solution over `[t0, t1]` (either direction).
#[derive(Debug, Clone)]
pub struct DenseSolution {
    t0: f64,
    t1: f64,
    y0: Vec<f64>,
    y1: Vec<f64>,
    segments: Vec<Segment>,
    n_rejected: usize,
}

impl DenseSolution {
    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t1
    }

    pub fn n_steps(&self) -> usize {
        self.segments.len()
    }

    pub fn n_rejected(&self) -> usize {
        self.n_rejected
    }

    pub fn final_state(&self) -> &[f64] {
        &self.y1
    }

    /// State at `t`, which must lie in the integrated span.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let dir = if self.t1 >= self.t0 { 1.0 } else { -1.0 };
        let slack = 1e-12 * (1.0 + self.t0.abs().max(self.t1.abs()));
        if (t - self.t0) * dir < -slack || (t - self.t1) * dir > slack {
            return Err(Error::InvalidArgument(format!(
                "t = {t} outside integrated span [{}, {}]",
                self.t0, self.t1
            )));
        }
        if t == self.t1 {
            return Ok(self.y1.clone());
        }
        if self.segments.is_empty() || t == self.t0 {
            return Ok(self.y0.clone());
        }
        let idx = self
            .segments
            .partition_point(|s| (s.t + s.h - t) * dir < 0.0)
            .min(self.segments.len() - 1);
        let mut out = vec![0.0; self.y0.len()];
        self.segments[idx].eval(t, &mut out);
        Ok(out)
    }
}

fn first_step(cfg: &SolverConfig, span: f64) -> f64 {
    cfg.initial_step.min(cfg.max_step).min(span)
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1`; `t1 < t0` runs backwards
/// with negative steps.
pub fn integrate<F>(mut f: F, y0: &[f64], t0: f64, t1: f64, cfg: &SolverConfig) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    cfg.validate()?;
    if !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidArgument("integration bounds must be finite".into()));
    }
    let dim = y0.len();
    let mut sol = DenseSolution {
        t0,
        t1,
        y0: y0.to_vec(),
        y1: y0.to_vec(),
        segments: Vec::new(),
        n_rejected: 0,
    };
    if t1 == t0 {
        return Ok(sol);
    }
    let dir = (t1 - t0).signum();
    let mut st = Stepper::new(dim);
    let mut ctl = Controller::new();
    let mut t = t0;
    let mut y = y0.to_vec();
    f(t, &y, &mut st.k[0])?;
    check_finite(&st.k[0])?;
    let mut h = dir * first_step(cfg, (t1 - t0).abs());
    let mut attempts = 0usize;
    loop {
        if sol.segments.len() >= cfg.max_steps || attempts >= 4 * cfg.max_steps {
            return Err(Error::StepLimit {
                max_steps: cfg.max_steps,
                t_end: t1,
            });
        }
        attempts += 1;
        // a step ending within rounding distance of t1 is stretched to it
        let last = (t + h * (1.0 + 1e-9) - t1) * dir >= 0.0;
        if last {
            h = t1 - t;
        }
        let err = st.attempt(&mut f, t, &y, h, cfg)?;
        if err <= 1.0 {
            let seg = st.dense_segment(t, h, &y);
            sol.segments.push(seg);
            st.k.swap(0, 6);
            y.copy_from_slice(&st.y_new);
            if last {
                t = t1;
                break;
            }
            t += h;
            h = ctl.next(h, err, true);
        } else {
            sol.n_rejected += 1;
            h = ctl.next(h, err, false);
        }
        h = dir * h.abs().min(cfg.max_step);
        if h.abs() <= 1e-14 * (1.0 + t.abs()) {
            return Err(Error::StepUnderflow(t));
        }
    }
    debug_assert_eq!(t, t1);
    sol.y1 = y;
    Ok(sol)
}

/// Accepted step of a recorded integration.
#[derive(Debug, Clone)]
pub struct TapeStep {
    pub t: f64,
    pub h: f64,
    /// Inputs of stages 1..6, the ones that feed the fifth-order update.
    pub stage_inputs: [Vec<f64>; 6],
}

/// Accepted steps plus the states at the requested output times.
#[derive(Debug, Clone)]
pub struct Tape {
    pub steps: Vec<TapeStep>,
    /// `outputs[k]` is the state at the `k`-th output time.
    pub outputs: Vec<Vec<f64>>,
    /// `output_step[k]` is the index of the step ending at output `k`.
    pub output_step: Vec<usize>,
}

/// Forward integration from `t0` that lands exactly on each of the increasing
/// `outputs` and records every accepted step for [`reverse_sweep`].
pub fn integrate_recorded<F>(mut f: F, y0: &[f64], t0: f64, outputs: &[f64], cfg: &SolverConfig) -> Result<Tape>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    cfg.validate()?;
    if outputs.is_empty() || outputs[0] <= t0 || outputs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("output times must increase strictly from t0".into()));
    }
    let dim = y0.len();
    let mut st = Stepper::new(dim);
    let mut ctl = Controller::new();
    let mut tape = Tape {
        steps: Vec::new(),
        outputs: Vec::with_capacity(outputs.len()),
        output_step: Vec::with_capacity(outputs.len()),
    };
    let mut t = t0;
    let mut y = y0.to_vec();
    f(t, &y, &mut st.k[0])?;
    check_finite(&st.k[0])?;
    let mut h = first_step(cfg, outputs[outputs.len() - 1] - t0);
    let mut next_out = 0;
    let mut attempts = 0usize;
    while next_out < outputs.len() {
        if tape.steps.len() >= cfg.max_steps || attempts >= 4 * cfg.max_steps {
            return Err(Error::StepLimit {
                max_steps: cfg.max_steps,
                t_end: outputs[outputs.len() - 1],
            });
        }
        attempts += 1;
        let target = outputs[next_out];
        // Carry the controller's proposal across landings instead of the
        // clipped step.
        let hit = t + h * (1.0 + 1e-9) >= target;
        let h_try = if hit { target - t } else { h };
        let err = st.attempt(&mut f, t, &y, h_try, cfg)?;
        if err <= 1.0 {
            tape.steps.push(TapeStep {
                t,
                h: h_try,
                stage_inputs: std::array::from_fn(|s| st.stage_in[s].clone()),
            });
            st.k.swap(0, 6);
            y.copy_from_slice(&st.y_new);
            let proposed = ctl.next(h_try, err, true);
            if hit {
                t = target;
                tape.outputs.push(y.clone());
                tape.output_step.push(tape.steps.len() - 1);
                next_out += 1;
                h = proposed.max(h.min(proposed));
            } else {
                t += h_try;
                h = proposed;
            }
        } else {
            h = ctl.next(h_try, err, false);
        }
        h = h.min(cfg.max_step);
        if h <= 1e-14 * (1.0 + t.abs()) {
            return Err(Error::StepUnderflow(t));
        }
    }
    Ok(tape)
}

/// Reverse-mode sweep through the recorded steps. `output_cot[k]` is the
/// cotangent of output `k`; `vjp(t, y, k_bar, y_bar)` must add
/// `(df/dy)^T k_bar` to `y_bar` (and accumulate any parameter cotangents
/// itself). Returns the cotangent of the initial state.
pub fn reverse_sweep<V>(tape: &Tape, output_cot: &[Vec<f64>], mut vjp: V) -> Result<Vec<f64>>
where
    V: FnMut(f64, &[f64], &[f64], &mut [f64]) -> Result<()>,
{
    if output_cot.len() != tape.outputs.len() {
        return Err(Error::SizeMismatch {
            expected: tape.outputs.len(),
            got: output_cot.len(),
        });
    }
    let dim = tape.outputs.first().map_or(0, Vec::len);
    let mut y_bar = vec![0.0; dim];
    let mut k_bar: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut s_bar = vec![0.0; dim];
    let mut out_idx = tape.outputs.len();
    for (n, step) in tape.steps.iter().enumerate().rev() {
        while out_idx > 0 && tape.output_step[out_idx - 1] == n {
            out_idx -= 1;
            for (yb, c) in y_bar.iter_mut().zip(&output_cot[out_idx]) {
                *yb += c;
            }
        }
        let h = step.h;
        // y_{n+1} = y_n + h sum_s B_s k_s
        for s in 0..6 {
            for i in 0..dim {
                k_bar[s][i] = h * B[s] * y_bar[i];
            }
        }
        // stage s input = y_n + h sum_{j<s} A_sj k_j, k_s = f(stage input)
        for s in (0..6).rev() {
            s_bar.iter_mut().for_each(|v| *v = 0.0);
            vjp(step.t + C[s] * h, &step.stage_inputs[s], &k_bar[s], &mut s_bar)?;
            for i in 0..dim {
                y_bar[i] += s_bar[i];
            }
            for j in 0..s {
                let a = h * A[s][j];
                if a != 0.0 {
                    for i in 0..dim {
                        k_bar[j][i] += a * s_bar[i];
                    }
                }
            }
        }
    }
    Ok(y_bar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = -y[0];
        Ok(())
    }

    fn rotation(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = -y[1];
        dy[1] = y[0];
        Ok(())
    }

    #[test]
    fn zero_field_keeps_state() {
        let sol = integrate(
            |_, _, dy: &mut [f64]| {
                dy.fill(0.0);
                Ok(())
            },
            &[1.5, -2.0],
            0.0,
            3.0,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(sol.final_state(), &[1.5, -2.0]);
    }

    #[test]
    fn exponential_decay() {
        let rtol = 1e-8;
        let cfg = SolverConfig::with_tolerance(rtol, 1e-12);
        let sol = integrate(decay, &[1.0], 0.0, 1.0, &cfg).unwrap();
        let err = (sol.final_state()[0] - (-1.0f64).exp()).abs();
        assert!(err < 10.0 * rtol, "{err:e}");
        for k in 0..=20 {
            let t = k as f64 * 0.05;
            let v = sol.eval(t).unwrap()[0];
            assert!((v - (-t).exp()).abs() < 1e-7, "dense output at {t}");
        }
        assert!(sol.eval(1.5).is_err());
    }

    #[test]
    fn backward_integration() {
        let cfg = SolverConfig::with_tolerance(1e-9, 1e-12);
        let sol = integrate(decay, &[(-1.0f64).exp()], 1.0, 0.0, &cfg).unwrap();
        assert!((sol.final_state()[0] - 1.0).abs() < 1e-7);
        assert!((sol.eval(0.5).unwrap()[0] - (-0.5f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn rotation_returns_after_period() {
        let rtol = 1e-8;
        let cfg = SolverConfig::with_tolerance(rtol, rtol);
        let sol = integrate(rotation, &[1.0, 0.0], 0.0, 2.0 * std::f64::consts::PI, &cfg).unwrap();
        let y = sol.final_state();
        let err = ((y[0] - 1.0).powi(2) + y[1].powi(2)).sqrt();
        assert!(err < 100.0 * rtol, "{err:e}");
    }

    #[test]
    fn step_limit_and_non_finite() {
        let cfg = SolverConfig {
            max_steps: 3,
            ..SolverConfig::with_tolerance(1e-12, 1e-12)
        };
        assert!(matches!(
            integrate(rotation, &[1.0, 0.0], 0.0, 100.0, &cfg),
            Err(Error::StepLimit { .. })
        ));
        let bad = |_t: f64, _y: &[f64], dy: &mut [f64]| {
            dy[0] = f64::NAN;
            Ok(())
        };
        assert!(matches!(
            integrate(bad, &[1.0], 0.0, 1.0, &SolverConfig::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn recorded_run_lands_on_outputs() {
        let cfg = SolverConfig::with_tolerance(1e-10, 1e-12);
        let outs = [0.1, 0.2, 0.35, 1.0];
        let tape = integrate_recorded(decay, &[2.0], 0.0, &outs, &cfg).unwrap();
        for (k, t) in outs.iter().enumerate() {
            assert!((tape.outputs[k][0] - 2.0 * (-t).exp()).abs() < 1e-9);
            let st = &tape.steps[tape.output_step[k]];
            assert!((st.t + st.h - t).abs() < 1e-15);
        }
    }

    #[test]
    fn reverse_sweep_matches_analytic_sensitivity() {
        // y(t) = y0 e^{-t}; d/dy0 of sum_k y(t_k) = sum_k e^{-t_k}
        let cfg = SolverConfig::with_tolerance(1e-10, 1e-12);
        let outs = [0.3, 0.7, 1.2];
        let tape = integrate_recorded(decay, &[1.0], 0.0, &outs, &cfg).unwrap();
        let cot = vec![vec![1.0]; 3];
        let g = reverse_sweep(&tape, &cot, |_t, _y, kb, yb| {
            yb[0] -= kb[0];
            Ok(())
        })
        .unwrap();
        let expected: f64 = outs.iter().map(|t| (-t).exp()).sum();
        assert!((g[0] - expected).abs() < 1e-8);
    }
}
