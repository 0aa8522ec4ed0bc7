//! Two-point functions from coefficient trajectories, their discrete Fourier
//! spectra, peak extraction and spectrum comparison.
//!
//! Transform convention: `S(omega_k) = dt * sum_j w_j C(t_j) e^{+i omega_k t_j}`
//! on the grid `omega_k = 2 pi k / T`, `T = M dt`, so a line `e^{-i E t}` in
//! `C(t)` shows up at `omega = +E`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::exact::{EigenSystem, Observable, SpectralLine};
use crate::pauli::PauliBasis;
use crate::trajectory::{fmt17, uniform_step, Metadata, Trajectory};

pub const SPEC_HEADER: &str = "opdyn-spec v1";
pub const PEAKS_HEADER: &str = "opdyn-peaks v1";
pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// `<Omega| sigma_i O |Omega>` for every string of `basis`.
pub fn ground_state_weights(eig: &EigenSystem, o: &Observable, basis: &PauliBasis) -> Result<Vec<Complex64>> {
    if basis.n_sites() != eig.spec().n_sites || o.n_sites() != eig.spec().n_sites {
        return Err(Error::SizeMismatch {
            expected: eig.spec().n_sites,
            got: basis.n_sites(),
        });
    }
    let omega = eig.ground_state();
    let v = o.matrix()? * &omega;
    Ok(basis
        .elements()
        .iter()
        .map(|p| {
            // <Omega| sigma |v> = sum_b conj(Omega_{b'}) phase_b v_b with sigma|b> = phase_b |b'>
            (0..v.len())
                .map(|b| {
                    let (ph, b2) = p.apply_to_index(b);
                    omega[b2].conj() * ph * v[b]
                })
                .sum()
        })
        .collect())
}

/// `C(t_j) = sum_i c_i(t_j) <Omega| sigma_i O |Omega>`.
pub fn assemble_two_point(traj: &Trajectory, eig: &EigenSystem, o: &Observable) -> Result<Vec<Complex64>> {
    let w = ground_state_weights(eig, o, traj.basis())?;
    assemble_with_weights(traj, &w)
}

pub fn assemble_with_weights(traj: &Trajectory, weights: &[Complex64]) -> Result<Vec<Complex64>> {
    if weights.len() != traj.n_series() {
        return Err(Error::SizeMismatch {
            expected: traj.n_series(),
            got: weights.len(),
        });
    }
    Ok(traj
        .coeffs()
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(weights).map(|(c, w)| w * *c).sum())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    fn weights(self, m: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; m],
            Window::Hann => (0..m)
                .map(|j| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / m as f64).cos()))
                .collect(),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::Rectangular => "rectangular",
            Window::Hann => "hann",
        })
    }
}

impl FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangular" => Ok(Self::Rectangular),
            "hann" => Ok(Self::Hann),
            _ => Err(Error::InvalidArgument(format!("unknown window {s:?}"))),
        }
    }
}

/// DFT of a uniformly sampled series on a signed, ascending `omega` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    omega: Vec<f64>,
    amplitudes: Vec<Complex64>,
    window: Window,
    dt: f64,
    span: f64,
    resolution: f64,
}

impl Spectrum {
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Ordinary frequencies `omega / 2 pi`.
    pub fn frequency(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w / (2.0 * std::f64::consts::PI)).collect()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm()).collect()
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `T = M dt`.
    pub fn span(&self) -> f64 {
        self.span
    }

    /// Bin spacing `2 pi / T`.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn is_low_resolution(&self, min_span: f64) -> bool {
        self.span < min_span
    }

    pub fn total_power(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.resolution / (2.0 * std::f64::consts::PI)
    }

    pub fn write_to<W: Write>(&self, mut w: W, meta: &Metadata) -> Result<()> {
        writeln!(w, "{SPEC_HEADER}")?;
        for (k, v) in meta.iter() {
            writeln!(w, "{k}={v}")?;
        }
        writeln!(w, "window={}", self.window)?;
        writeln!(w, "dt={}", fmt17(self.dt))?;
        writeln!(w, "span={}", fmt17(self.span))?;
        writeln!(w, "resolution={}", fmt17(self.resolution))?;
        writeln!(w, "n_bins={}", self.len())?;
        writeln!(w, "omega f magnitude")?;
        let two_pi = 2.0 * std::f64::consts::PI;
        for (om, a) in self.omega.iter().zip(&self.amplitudes) {
            writeln!(w, "{} {} {}", fmt17(*om), fmt17(om / two_pi), fmt17(a.norm()))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: &Metadata) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w, meta)?;
        w.flush()?;
        Ok(())
    }
}

/// Spectrum of `series` sampled on the uniform grid `times`.
pub fn fft_spectrum(times: &[f64], series: &[Complex64], window: Window) -> Result<Spectrum> {
    if times.len() != series.len() {
        return Err(Error::SizeMismatch {
            expected: times.len(),
            got: series.len(),
        });
    }
    if series.is_empty() {
        return Err(Error::InvalidArgument("empty series".into()));
    }
    let m = series.len();
    let dt = if m == 1 {
        return Err(Error::InvalidArgument("spectrum needs at least two samples".into()));
    } else {
        uniform_step(times).ok_or_else(|| Error::InvalidArgument("spectrum needs a uniform time grid".into()))?
    };
    if series.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("series".into()));
    }
    let span = m as f64 * dt;
    let dw = 2.0 * std::f64::consts::PI / span;
    let w = window.weights(m);
    let mut buf: Vec<Complex64> = series.iter().zip(&w).map(|(c, wj)| c * *wj).collect();
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
    // Reorder bins k = -floor(m/2) .. ceil(m/2)-1 and restore the t_0 phase.
    let k_min = -((m / 2) as i64);
    let t0 = times[0];
    let mut omega = Vec::with_capacity(m);
    let mut amplitudes = Vec::with_capacity(m);
    for n in 0..m as i64 {
        let k = k_min + n;
        let idx = k.rem_euclid(m as i64) as usize;
        let om = k as f64 * dw;
        omega.push(om);
        amplitudes.push(buf[idx] * dt * Complex64::from_polar(1.0, om * t0));
    }
    Ok(Spectrum {
        omega,
        amplitudes,
        window,
        dt,
        span,
        resolution: dw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub omega: f64,
    pub magnitude: f64,
    /// Half width at half maximum in angular frequency.
    pub half_width: f64,
}

impl Peak {
    pub fn frequency(&self) -> f64 {
        self.omega / (2.0 * std::f64::consts::PI)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakList {
    pub peaks: Vec<Peak>,
    /// Lowest peak with `omega > resolution`.
    pub gap_estimate: Option<f64>,
    pub threshold_fraction: f64,
    pub resolution: f64,
}

impl PeakList {
    pub fn write_to<W: Write>(&self, mut w: W, meta: &Metadata) -> Result<()> {
        writeln!(w, "{PEAKS_HEADER}")?;
        for (k, v) in meta.iter() {
            writeln!(w, "{k}={v}")?;
        }
        writeln!(w, "threshold_fraction={}", fmt17(self.threshold_fraction))?;
        writeln!(w, "resolution={}", fmt17(self.resolution))?;
        match self.gap_estimate {
            Some(g) => {
                writeln!(w, "gap_omega={}", fmt17(g))?;
                writeln!(w, "gap_f={}", fmt17(g / (2.0 * std::f64::consts::PI)))?;
            }
            None => {
                writeln!(w, "gap_omega=none")?;
                writeln!(w, "gap_f=none")?;
            }
        }
        writeln!(w, "n_peaks={}", self.peaks.len())?;
        for (i, p) in self.peaks.iter().enumerate() {
            writeln!(
                w,
                "peak.{i}={} {} {} {}",
                fmt17(p.omega),
                fmt17(p.frequency()),
                fmt17(p.magnitude),
                fmt17(p.half_width)
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: &Metadata) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w, meta)?;
        w.flush()?;
        Ok(())
    }

    /// Parses the output of [`PeakList::write_to`]; unknown metadata keys
    /// are skipped.
    pub fn read_from<R: std::io::BufRead>(r: R) -> Result<PeakList> {
        let what = "peaks file";
        let num = |v: &str, line: usize| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::format(what, line, format!("bad number {v:?}")))
        };
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim_end() == PEAKS_HEADER => {}
            Some((_, Err(e))) => return Err(e.into()),
            _ => return Err(Error::format(what, 1, format!("expected header {PEAKS_HEADER:?}"))),
        }
        let mut list = PeakList {
            peaks: Vec::new(),
            gap_estimate: None,
            threshold_fraction: f64::NAN,
            resolution: f64::NAN,
        };
        let mut n_peaks = None;
        for (i, line) in lines {
            let line = line?;
            let ln = i + 1;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(what, ln, "expected key=value"))?;
            match k {
                "threshold_fraction" => list.threshold_fraction = num(v, ln)?,
                "resolution" => list.resolution = num(v, ln)?,
                "gap_omega" if v != "none" => list.gap_estimate = Some(num(v, ln)?),
                "n_peaks" => n_peaks = Some(v.parse::<usize>().map_err(|_| Error::format(what, ln, "bad count"))?),
                _ if k.starts_with("peak.") => {
                    let f: Vec<f64> = v.split_whitespace().map(|x| num(x, ln)).collect::<Result<_>>()?;
                    if f.len() != 4 {
                        return Err(Error::format(what, ln, "peak needs omega f magnitude half_width"));
                    }
                    list.peaks.push(Peak {
                        omega: f[0],
                        magnitude: f[2],
                        half_width: f[3],
                    });
                }
                _ => {}
            }
        }
        if n_peaks != Some(list.peaks.len()) || list.resolution.is_nan() || list.threshold_fraction.is_nan() {
            return Err(Error::format(what, 0, "incomplete peaks file"));
        }
        Ok(list)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PeakList> {
        PeakList::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Local maxima above `threshold_fraction` times the global maximum, refined
/// by a parabola through the peak bin and its neighbours.
pub fn find_peaks(spec: &Spectrum, threshold_fraction: f64) -> Result<PeakList> {
    find_peaks_above(spec, threshold_fraction, f64::NEG_INFINITY)
}

/// [`find_peaks`] restricted to bins with |omega| > `omega_min`; the
/// threshold is relative to the largest magnitude inside that band.
pub fn find_peaks_above(spec: &Spectrum, threshold_fraction: f64, omega_min: f64) -> Result<PeakList> {
    if spec.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold fraction must be in (0, 1), got {threshold_fraction}"
        )));
    }
    let in_band: Vec<bool> = spec.omega.iter().map(|w| w.abs() > omega_min).collect();
    let mag = spec.magnitude();
    let dw = spec.resolution;
    let max = mag
        .iter()
        .zip(&in_band)
        .filter(|(_, &b)| b)
        .fold(0.0, |m: f64, (&x, _)| m.max(x));
    let mut peaks = Vec::new();
    if max > 0.0 {
        let cut = threshold_fraction * max;
        let n = mag.len();
        for k in 0..n {
            let left = if k > 0 { mag[k - 1] } else { f64::NEG_INFINITY };
            let right = if k + 1 < n { mag[k + 1] } else { f64::NEG_INFINITY };
            if !in_band[k] || mag[k] < cut || mag[k] <= left || mag[k] < right {
                continue;
            }
            let (mut om, mut height) = (spec.omega[k], mag[k]);
            if k > 0 && k + 1 < n {
                let (a, b, c) = (left, mag[k], right);
                let denom = a - 2.0 * b + c;
                if denom < 0.0 {
                    let p = 0.5 * (a - c) / denom;
                    om += p * dw;
                    height = b - 0.25 * (a - c) * p;
                }
            }
            let half = 0.5 * height;
            let crossing = |dir: i64| -> f64 {
                let mut j = k as i64;
                loop {
                    let next = j + dir;
                    if next < 0 || next >= n as i64 {
                        return (j - k as i64).abs() as f64 * dw;
                    }
                    let (m0, m1) = (mag[j as usize], mag[next as usize]);
                    if m1 < half {
                        let frac = if m0 > m1 { (m0 - half) / (m0 - m1) } else { 0.0 };
                        return ((j - k as i64).abs() as f64 + frac) * dw;
                    }
                    j = next;
                }
            };
            let half_width = 0.5 * (crossing(-1) + crossing(1));
            peaks.push(Peak {
                omega: om,
                magnitude: height,
                half_width,
            });
        }
    }
    let gap_estimate = peaks.iter().map(|p| p.omega).find(|&w| w > dw);
    Ok(PeakList {
        peaks,
        gap_estimate,
        threshold_fraction,
        resolution: dw,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakMatch {
    pub a: Peak,
    pub b: Peak,
    /// `b.omega - a.omega`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumComparison {
    pub tolerance: f64,
    pub matched: Vec<PeakMatch>,
    pub unmatched_a: Vec<Peak>,
    pub unmatched_b: Vec<Peak>,
    /// Unmatched peaks lying within the tolerance of a matched peak on the
    /// other side: two lines the coarser spectrum merges into one.
    pub unresolved: Vec<Peak>,
}

impl SpectrumComparison {
    pub fn all_matched(&self) -> bool {
        self.unmatched_a.is_empty() && self.unmatched_b.is_empty()
    }

    pub fn max_abs_delta(&self) -> f64 {
        self.matched.iter().map(|m| m.delta.abs()).fold(0.0, f64::max)
    }
}

/// Greedy nearest-frequency matching with tolerance `tolerance`.
pub fn compare_peaks(a: &PeakList, b: &PeakList, tolerance: f64) -> SpectrumComparison {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, pa) in a.peaks.iter().enumerate() {
        for (j, pb) in b.peaks.iter().enumerate() {
            let d = (pb.omega - pa.omega).abs();
            if d <= tolerance {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.peaks.len()];
    let mut used_b = vec![false; b.peaks.len()];
    let mut matched = Vec::new();
    for (_, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            matched.push(PeakMatch {
                a: a.peaks[i],
                b: b.peaks[j],
                delta: b.peaks[j].omega - a.peaks[i].omega,
            });
        }
    }
    matched.sort_by(|x, y| x.a.omega.total_cmp(&y.a.omega));
    let unmatched_a: Vec<Peak> = (0..a.peaks.len()).filter(|&i| !used_a[i]).map(|i| a.peaks[i]).collect();
    let unmatched_b: Vec<Peak> = (0..b.peaks.len()).filter(|&j| !used_b[j]).map(|j| b.peaks[j]).collect();
    let matched_a: Vec<f64> = matched.iter().map(|m| m.a.omega).collect();
    let matched_b: Vec<f64> = matched.iter().map(|m| m.b.omega).collect();
    let near = |p: &Peak, others: &[f64]| others.iter().any(|w| (w - p.omega).abs() <= tolerance);
    let mut unresolved: Vec<Peak> = unmatched_a
        .iter()
        .filter(|p| near(p, &matched_b))
        .chain(unmatched_b.iter().filter(|p| near(p, &matched_a)))
        .copied()
        .collect();
    unresolved.sort_by(|x, y| x.omega.total_cmp(&y.omega));
    SpectrumComparison {
        tolerance,
        matched,
        unmatched_a,
        unmatched_b,
        unresolved,
    }
}

/// Peaks of both spectra compared with a one-bin tolerance (the coarser bin).
pub fn compare_spectra(a: &Spectrum, b: &Spectrum, threshold_fraction: f64) -> Result<SpectrumComparison> {
    let pa = find_peaks(a, threshold_fraction)?;
    let pb = find_peaks(b, threshold_fraction)?;
    Ok(compare_peaks(&pa, &pb, a.resolution.max(b.resolution)))
}

/// Spectral peaks checked against exact excitation lines.
#[derive(Debug, Clone, PartialEq)]
pub struct LineMatch {
    pub tolerance: f64,
    pub matched: Vec<(SpectralLine, Peak)>,
    /// Significant lines with no peak within the tolerance.
    pub missing: Vec<SpectralLine>,
    /// Peaks farther than the tolerance from every line of nonzero weight.
    pub spurious: Vec<Peak>,
}

impl LineMatch {
    pub fn passes(&self) -> bool {
        self.missing.is_empty() && self.spurious.is_empty()
    }
}

/// Lines with weight at least `weight_fraction * C(0)` and `omega > omega_min`
/// must each have a peak within `tolerance`; peaks above `omega_min` must each
/// sit near some line. `C(0)` is the total line weight.
pub fn match_lines(
    peaks: &PeakList,
    lines: &[SpectralLine],
    weight_fraction: f64,
    tolerance: f64,
    omega_min: f64,
) -> LineMatch {
    let total: f64 = lines.iter().map(|l| l.weight).sum();
    let mut matched = Vec::new();
    let mut missing = Vec::new();
    for l in lines
        .iter()
        .filter(|l| l.frequency > omega_min && l.weight >= weight_fraction * total)
    {
        let best = peaks
            .peaks
            .iter()
            .filter(|p| (p.omega - l.frequency).abs() <= tolerance)
            .min_by(|x, y| (x.omega - l.frequency).abs().total_cmp(&(y.omega - l.frequency).abs()));
        match best {
            Some(p) => matched.push((*l, *p)),
            None => missing.push(*l),
        }
    }
    let spurious = peaks
        .peaks
        .iter()
        .filter(|p| p.omega > omega_min && !lines.iter().any(|l| (p.omega - l.frequency).abs() <= tolerance))
        .copied()
        .collect();
    LineMatch {
        tolerance,
        matched,
        missing,
        spurious,
    }
}
