//! Coefficient trajectories and the `opdyn-traj v1` text format.
//!
//! ```text
//! opdyn-traj v1
//! n_sites=3
//! coupling=1
//! ...
//! t IIX IIY ...
//! 0.0000000000000000e0 1.0000000000000000e0 ...
//! ```
//!
//! Values carry 17 significant digits so they parse back to the same `f64`.

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::pauli::{PauliBasis, PauliString};

pub const TRAJ_HEADER: &str = "opdyn-traj v1";

/// Insertion-ordered `key=value` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metadata(Vec<(String, String)>);

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.0.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.0.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn extend_from(&mut self, other: &Metadata) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Time grid plus an `(M+1) x K` coefficient matrix; row `j` is `h(t_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    basis: PauliBasis,
    coeffs: Array2<f64>,
    meta: Metadata,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, basis: PauliBasis, coeffs: Array2<f64>, meta: Metadata) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("trajectory needs at least one time".into()));
        }
        if coeffs.nrows() != times.len() {
            return Err(Error::SizeMismatch {
                expected: times.len(),
                got: coeffs.nrows(),
            });
        }
        if coeffs.ncols() != basis.len() {
            return Err(Error::SizeMismatch {
                expected: basis.len(),
                got: coeffs.ncols(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("times must be finite and strictly increasing".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("trajectory coefficients".into()));
        }
        Ok(Self {
            times,
            basis,
            coeffs,
            meta,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn basis(&self) -> &PauliBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> ArrayView2<'_, f64> {
        self.coeffs.view()
    }

    pub fn meta(&self) -> &Metadata {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut Metadata {
        &mut self.meta
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_series(&self) -> usize {
        self.basis.len()
    }

    pub fn row(&self, j: usize) -> ArrayView1<'_, f64> {
        self.coeffs.row(j)
    }

    pub fn column(&self, p: &PauliString) -> Option<ArrayView1<'_, f64>> {
        self.basis.index_of(p).map(|i| self.coeffs.column(i))
    }

    pub fn into_parts(self) -> (Vec<f64>, PauliBasis, Array2<f64>, Metadata) {
        (self.times, self.basis, self.coeffs, self.meta)
    }

    /// Common spacing of the grid when it is uniform to a relative 1e-9.
    pub fn uniform_step(&self) -> Option<f64> {
        uniform_step(&self.times)
    }

    /// Index of a grid point equal to `t` within `1e-9`.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    /// Rows with `lo <= t <= hi` (inclusive, 1e-9 slack).
    pub fn slice_time(&self, lo: f64, hi: f64) -> Result<Trajectory> {
        let eps = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        let idx: Vec<usize> = (0..self.times.len())
            .filter(|&j| self.times[j] >= lo - eps && self.times[j] <= hi + eps)
            .collect();
        if idx.is_empty() {
            return Err(Error::InvalidArgument(format!("no grid points in [{lo}, {hi}]")));
        }
        let times = idx.iter().map(|&j| self.times[j]).collect();
        let coeffs = self.coeffs.select(Axis(0), &idx);
        Trajectory::new(times, self.basis.clone(), coeffs, self.meta.clone())
    }

    /// Columns restricted to `sub`, which must be a subset of this basis.
    pub fn select_columns(&self, sub: &PauliBasis) -> Result<Trajectory> {
        let idx = sub
            .elements()
            .iter()
            .map(|p| {
                self.basis
                    .index_of(p)
                    .ok_or_else(|| Error::InvalidArgument(format!("{p} not in trajectory basis")))
            })
            .collect::<Result<Vec<_>>>()?;
        let coeffs = self.coeffs.select(Axis(1), &idx);
        Trajectory::new(self.times.clone(), sub.clone(), coeffs, self.meta.clone())
    }

    /// `self` followed by the rows of `later` with `t` beyond the last time here.
    pub fn stitch(&self, later: &Trajectory) -> Result<Trajectory> {
        if later.basis != self.basis {
            return Err(Error::InvalidArgument("cannot stitch trajectories with different bases".into()));
        }
        let last = *self.times.last().expect("non-empty");
        let eps = 1e-9 * (1.0 + last.abs());
        let tail: Vec<usize> = (0..later.n_times()).filter(|&j| later.times[j] > last + eps).collect();
        let mut times = self.times.clone();
        times.extend(tail.iter().map(|&j| later.times[j]));
        let tail_rows = later.coeffs.select(Axis(0), &tail);
        let coeffs = ndarray::concatenate(Axis(0), &[self.coeffs.view(), tail_rows.view()])
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Trajectory::new(times, self.basis.clone(), coeffs, self.meta.clone())
    }

    pub fn scaled(&self, alpha: f64) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            basis: self.basis.clone(),
            coeffs: &self.coeffs * alpha,
            meta: self.meta.clone(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRAJ_HEADER}")?;
        for (k, v) in self.meta.iter() {
            writeln!(w, "{k}={v}")?;
        }
        write!(w, "t")?;
        for l in self.basis.labels() {
            write!(w, " {l}")?;
        }
        writeln!(w)?;
        for (j, t) in self.times.iter().enumerate() {
            write!(w, "{}", fmt17(*t))?;
            for c in self.coeffs.row(j) {
                write!(w, " {}", fmt17(*c))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Trajectory> {
        const WHAT: &str = "trajectory file";
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, Ok(l))) if l.trim() == TRAJ_HEADER => {}
            Some((_, Ok(l))) => return Err(Error::format(WHAT, 1, format!("bad header {l:?}"))),
            Some((_, Err(e))) => return Err(e.into()),
            None => return Err(Error::format(WHAT, 1, "empty file")),
        }
        let mut meta = Metadata::new();
        let mut labels: Option<Vec<String>> = None;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            match &labels {
                None => {
                    if let Some((k, v)) = trimmed.split_once('=') {
                        meta.set(k.trim(), v.trim());
                    } else {
                        let mut cols = trimmed.split_whitespace();
                        if cols.next() != Some("t") {
                            return Err(Error::format(WHAT, lineno, "column line must start with 't'"));
                        }
                        labels = Some(cols.map(str::to_string).collect());
                    }
                }
                Some(l) => {
                    let nums = trimmed
                        .split_whitespace()
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| Error::format(WHAT, lineno, e.to_string()))?;
                    if nums.len() != l.len() + 1 {
                        return Err(Error::format(
                            WHAT,
                            lineno,
                            format!("expected {} values, found {}", l.len() + 1, nums.len()),
                        ));
                    }
                    times.push(nums[0]);
                    values.extend_from_slice(&nums[1..]);
                }
            }
        }
        let labels = labels.ok_or_else(|| Error::format(WHAT, 0, "missing column line"))?;
        if labels.is_empty() {
            return Err(Error::format(WHAT, 0, "no coefficient columns"));
        }
        if times.is_empty() {
            return Err(Error::format(WHAT, 0, "no data rows"));
        }
        let basis = PauliBasis::from_labels(&labels)?;
        if basis.labels() != labels.as_slice() {
            return Err(Error::format(WHAT, 0, "column labels are not in canonical order"));
        }
        let coeffs = Array2::from_shape_vec((times.len(), labels.len()), values)
            .map_err(|e| Error::format(WHAT, 0, e.to_string()))?;
        Trajectory::new(times, basis, coeffs, meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Trajectory> {
        let f = std::fs::File::open(path)?;
        Trajectory::read_from(std::io::BufReader::new(f))
    }
}

/// 17 significant digits, enough for an exact `f64` round trip.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn uniform_step(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let ok = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1e-300) + 1e-12);
    ok.then_some(dt)
}

/// `n` points `t_start + k dt`, `k = 0..n`.
pub fn uniform_grid(t_start: f64, dt: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t_start + k as f64 * dt).collect()
}

/// Uniform grid covering `[t_start, t_end]` with step `dt` (end included
/// when it lies on the grid to 1e-9).
pub fn grid_between(t_start: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_end >= t_start) {
        return Err(Error::InvalidArgument(format!(
            "bad grid [{t_start}, {t_end}] step {dt}"
        )));
    }
    let n = ((t_end - t_start) / dt + 1e-9).floor() as usize + 1;
    Ok(uniform_grid(t_start, dt, n))
}
