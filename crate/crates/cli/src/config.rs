//! Run configuration: flat `section.key = value` lines with `#` comments.
//!
//! Every key has a default; unknown keys are rejected. Command-line
//! overrides use the same `key=value` syntax and win over the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

/// Keys with their defaults. `auto` values are resolved by the command that
/// reads them.
const KEYS: &[(&str, &str)] = &[
    ("run.seed", "0"),
    ("tfim.n_sites", "3"),
    ("tfim.coupling", "1"),
    ("tfim.field", "1"),
    ("tfim.sign_convention", "main_text"),
    ("tfim.boundary", "periodic"),
    ("observable.expr", "sum:X"),
    ("truncation.mode", "full"),
    ("truncation.radius", "1"),
    ("truncation.symmetry", "false"),
    ("truncation.velocity", "none"),
    ("truncation.sweep", "false"),
    ("grid.t_start", "0"),
    ("grid.t_end", "5"),
    ("grid.dt", "0.1"),
    ("noise.p", "0"),
    ("noise.gamma", "none"),
    ("noise.trotter_dt", "0.1"),
    ("noise.sigma", "0"),
    ("noise.mode", "absolute"),
    ("noise.seed", "auto"),
    ("network.variant", "fan"),
    ("network.depth", "3"),
    ("network.width", "128"),
    ("network.partition", "auto"),
    ("network.n_freq", "16"),
    ("network.freq_min", "0.1"),
    ("network.freq_max", "auto"),
    ("network.train_frequencies", "false"),
    ("network.append_time", "false"),
    ("network.readout_gain", "0.1"),
    ("network.seed", "auto"),
    ("train.batch_size", "64"),
    ("train.window_steps", "5"),
    ("train.learning_rate", "0.003"),
    ("train.lr_decay", "0.998"),
    ("train.max_epochs", "1500"),
    ("train.patience", "200"),
    ("train.validation_fraction", "0.2"),
    ("train.grad_clip", "0"),
    ("train.seed", "auto"),
    ("train.resume", "none"),
    ("solver.rtol", "1e-6"),
    ("solver.atol", "1e-8"),
    ("solver.initial_step", "0.01"),
    ("solver.max_step", "inf"),
    ("solver.max_steps", "200000"),
    ("predict.t0", "5"),
    ("predict.t_end", "20"),
    ("predict.dt", "0.1"),
    ("predict.reference", "none"),
    ("spectrum.window", "rectangular"),
    ("spectrum.threshold", "0.05"),
    ("spectrum.min_span", "50"),
    ("spectrum.prefix", "none"),
    ("spectrum.t_end", "none"),
    ("spectrum.f_min", "none"),
    ("compare.variants", "fcn,fan"),
    ("compare.checkpoints", "none"),
    ("compare.t_end", "auto"),
    ("compare.spectrum_t_end", "200"),
    ("validate.seed", "auto"),
    ("io.history", "auto"),
    ("io.peaks", "auto"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_assignment(line).ok_or_else(|| anyhow!("line {}: expected `section.key = value`", i + 1))?;
            cfg.set(k, v).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => bail!("unknown config key {key:?}"),
        }
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = split_assignment(o).ok_or_else(|| anyhow!("override {o:?} is not key=value"))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("config key {key} is not declared"))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key);
        v.parse::<T>().map_err(|e| anyhow!("config {key} = {v:?}: {e}"))
    }

    /// `None` for the literal `none`.
    pub fn get_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            "none" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    /// `None` for the literal `auto`.
    pub fn get_auto<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            "auto" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    /// Section seed, falling back to `run.seed`.
    pub fn seed(&self, key: &str) -> Result<u64> {
        match self.get_auto(key)? {
            Some(s) => Ok(s),
            None => self.get("run.seed"),
        }
    }

    /// All keys in sorted order, one `key = value` line each.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
