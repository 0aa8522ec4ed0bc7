//! Hardware-noise surrogate applied to clean coefficient trajectories:
//! `c'(t) = e^{-Gamma t} c(t) + eps`.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Decay rate of a depolarizing channel with per-layer probability `p`
/// applied every `dt`.
pub fn gamma_from_p(p: f64, dt: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("depolarizing p must be in [0, 1), got {p}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("trotter dt must be positive, got {dt}")));
    }
    Ok(-(-p).ln_1p() / dt)
}

/// Whether `gaussian_sigma` is an absolute scale or relative to `|c'(t)|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Absolute,
    Relative,
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseMode::Absolute => "absolute",
            NoiseMode::Relative => "relative",
        })
    }
}

impl FromStr for NoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(Self::Absolute),
            "relative" => Ok(Self::Relative),
            _ => Err(Error::InvalidArgument(format!("unknown noise mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    depolarizing_p: f64,
    trotter_dt: f64,
    gamma: f64,
    gaussian_sigma: f64,
    mode: NoiseMode,
    seed: u64,
}

impl NoiseModel {
    pub fn new(p: f64, trotter_dt: f64, gaussian_sigma: f64, mode: NoiseMode, seed: u64) -> Result<Self> {
        let gamma = gamma_from_p(p, trotter_dt)?;
        if !(gaussian_sigma >= 0.0) || !gaussian_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gaussian sigma must be non-negative, got {gaussian_sigma}"
            )));
        }
        Ok(Self {
            depolarizing_p: p,
            trotter_dt,
            gamma,
            gaussian_sigma,
            mode,
            seed,
        })
    }

    /// Model with a target decay rate; `p = 1 - e^{-Gamma dt}` and the stored
    /// rate is recomputed from that `p`.
    pub fn from_gamma(gamma: f64, trotter_dt: f64, gaussian_sigma: f64, mode: NoiseMode, seed: u64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be non-negative, got {gamma}")));
        }
        let p = -(-gamma * trotter_dt).exp_m1();
        Self::new(p, trotter_dt, gaussian_sigma, mode, seed)
    }

    pub fn noiseless() -> Self {
        Self::new(0.0, 0.1, 0.0, NoiseMode::Absolute, 0).expect("valid")
    }

    pub fn depolarizing_p(&self) -> f64 {
        self.depolarizing_p
    }

    pub fn trotter_dt(&self) -> f64 {
        self.trotter_dt
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gaussian_sigma(&self) -> f64 {
        self.gaussian_sigma
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed for one column: depends only on the run seed and the label.
fn column_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the run seed.
    let h = label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    splitmix64(seed ^ splitmix64(h))
}

/// Decays row `j` by `e^{-Gamma t_j}` and adds Gaussian noise. The draw for
/// entry `(j, label)` is the `j`-th value of a stream keyed by
/// `(seed, label)`, so results do not depend on which columns are present.
pub fn apply_noise(traj: &Trajectory, model: &NoiseModel) -> Result<Trajectory> {
    let times = traj.times();
    let clean = traj.coeffs();
    let mut out = Array2::zeros(clean.raw_dim());
    for (i, label) in traj.basis().labels().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(column_seed(model.seed, label));
        for (j, &t) in times.iter().enumerate() {
            let decayed = (-model.gamma * t).exp() * clean[(j, i)];
            let value = if model.gaussian_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                let scale = match model.mode {
                    NoiseMode::Absolute => model.gaussian_sigma,
                    NoiseMode::Relative => model.gaussian_sigma * decayed.abs(),
                };
                decayed + scale * z
            } else {
                decayed
            };
            out[(j, i)] = value;
        }
    }
    let mut meta = traj.meta().clone();
    meta.set("noise.p", model.depolarizing_p);
    meta.set("noise.dt", model.trotter_dt);
    meta.set("noise.gamma", model.gamma);
    meta.set("noise.sigma", model.gaussian_sigma);
    meta.set("noise.mode", model.mode);
    meta.set("noise.seed", model.seed);
    meta.set("noise.draws", "per_entry");
    Trajectory::new(times.to_vec(), traj.basis().clone(), out, meta)
}
