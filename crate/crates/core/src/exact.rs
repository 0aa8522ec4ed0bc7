//! Exact-diagonalization oracle for the transverse-field Ising chain.
//!
//! One dense eigendecomposition per model; every time-dependent quantity is
//! then formed from phases in the eigenbasis.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pauli::{truncated_basis, PauliBasis, PauliString, SymmetryOperator, TruncationPolicy, DENSE_ORACLE_LIMIT};
use crate::trajectory::{Metadata, Trajectory};

/// Imaginary parts of Pauli coefficients below this are rounding noise.
pub const IMAG_TOLERANCE: f64 = 1e-10;

/// Energy gap below which the ground state counts as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConvention {
    /// `H = -x sum Z Z - g sum X`
    MainText,
    /// `H = x sum Z Z + g sum X`
    Appendix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    Open,
}

impl fmt::Display for SignConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignConvention::MainText => "main_text",
            SignConvention::Appendix => "appendix",
        })
    }
}

impl FromStr for SignConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main_text" => Ok(Self::MainText),
            "appendix" => Ok(Self::Appendix),
            _ => Err(Error::InvalidArgument(format!("unknown sign convention {s:?}"))),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "periodic",
            Boundary::Open => "open",
        })
    }
}

impl FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Self::Periodic),
            "open" => Ok(Self::Open),
            _ => Err(Error::InvalidArgument(format!("unknown boundary {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfimSpec {
    pub n_sites: usize,
    pub coupling: f64,
    pub field: f64,
    pub sign_convention: SignConvention,
    pub boundary: Boundary,
}

impl Default for TfimSpec {
    fn default() -> Self {
        Self {
            n_sites: 3,
            coupling: 1.0,
            field: 1.0,
            sign_convention: SignConvention::MainText,
            boundary: Boundary::Periodic,
        }
    }
}

impl TfimSpec {
    pub fn new(n_sites: usize, coupling: f64) -> Self {
        Self {
            n_sites,
            coupling,
            ..Self::default()
        }
    }

    /// Weighted Pauli terms of the Hamiltonian; periodic chains close the
    /// last bond onto site 0.
    pub fn terms(&self) -> Vec<(f64, PauliString)> {
        let n = self.n_sites;
        let sign = match self.sign_convention {
            SignConvention::MainText => -1.0,
            SignConvention::Appendix => 1.0,
        };
        let n_bonds = match self.boundary {
            Boundary::Periodic => n,
            Boundary::Open => n.saturating_sub(1),
        };
        let mut terms = Vec::with_capacity(n_bonds + n);
        for i in 0..n_bonds {
            let j = (i + 1) % n;
            let zi = PauliString::single(n, i, 'Z').expect("site in range");
            let zj = PauliString::single(n, j, 'Z').expect("site in range");
            let (_, zz) = zi.product(&zj).expect("same size");
            terms.push((sign * self.coupling, zz));
        }
        for i in 0..n {
            terms.push((sign * self.field, PauliString::single(n, i, 'X').expect("site in range")));
        }
        terms
    }

    fn check_size(&self) -> Result<()> {
        if self.n_sites == 0 {
            return Err(Error::InvalidArgument("n_sites must be positive".into()));
        }
        if self.n_sites > DENSE_ORACLE_LIMIT {
            return Err(Error::OracleLimit {
                n_sites: self.n_sites,
                limit: DENSE_ORACLE_LIMIT,
            });
        }
        Ok(())
    }

    pub fn record(&self, meta: &mut Metadata) {
        meta.set("n_sites", self.n_sites);
        meta.set("coupling", self.coupling);
        meta.set("field", self.field);
        meta.set("sign_convention", self.sign_convention);
        meta.set("boundary", self.boundary);
    }
}

/// Dense Hamiltonian matrix.
pub fn build_hamiltonian(spec: &TfimSpec) -> Result<DMatrix<Complex64>> {
    spec.check_size()?;
    let dim = 1usize << spec.n_sites;
    let mut h = DMatrix::zeros(dim, dim);
    for (w, p) in spec.terms() {
        h += p.to_matrix()? * Complex64::new(w, 0.0);
    }
    Ok(h)
}

/// Real linear combination of non-identity Pauli strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    terms: Vec<(f64, PauliString)>,
}

impl Observable {
    pub fn new(terms: Vec<(f64, PauliString)>) -> Result<Self> {
        let n = terms.first().ok_or(Error::EmptyObservable)?.1.n_sites();
        for (w, p) in &terms {
            if p.n_sites() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    got: p.n_sites(),
                });
            }
            if p.is_identity() {
                return Err(Error::IdentityString);
            }
            if !w.is_finite() {
                return Err(Error::NonFinite("observable weight".into()));
            }
        }
        Ok(Self { terms })
    }

    /// `sum_i P_i` for a single-site letter `P`.
    pub fn uniform_sum(n_sites: usize, letter: char) -> Result<Self> {
        let terms = (0..n_sites)
            .map(|i| PauliString::single(n_sites, i, letter).map(|p| (1.0, p)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }

    /// Parses `sum:X` (needs `n_sites`) or `w*LABEL+w*LABEL+...`.
    pub fn parse(s: &str, n_sites: usize) -> Result<Self> {
        let s = s.trim();
        if let Some(letter) = s.strip_prefix("sum:") {
            let mut chars = letter.chars();
            return match (chars.next(), chars.next()) {
                (Some(c), None) => Self::uniform_sum(n_sites, c),
                _ => Err(Error::InvalidArgument(format!("bad observable {s:?}"))),
            };
        }
        let mut terms = Vec::new();
        for part in s.split('+').map(str::trim).filter(|p| !p.is_empty()) {
            let (w, label) = match part.split_once('*') {
                Some((w, l)) => (
                    w.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("bad weight in {part:?}")))?,
                    l.trim(),
                ),
                None => (1.0, part),
            };
            let p: PauliString = label.parse()?;
            if p.n_sites() != n_sites {
                return Err(Error::SizeMismatch {
                    expected: n_sites,
                    got: p.n_sites(),
                });
            }
            terms.push((w, p));
        }
        Self::new(terms)
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn strings(&self) -> Vec<PauliString> {
        self.terms.iter().map(|(_, p)| *p).collect()
    }

    pub fn n_sites(&self) -> usize {
        self.terms[0].1.n_sites()
    }

    pub fn commutes_with(&self, s: &PauliString) -> Result<bool> {
        for (_, p) in &self.terms {
            if !p.commutes(s)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn matrix(&self) -> Result<DMatrix<Complex64>> {
        let dim = 1usize << self.n_sites();
        let mut m = DMatrix::zeros(dim, dim);
        for (w, p) in &self.terms {
            m += p.to_matrix()? * Complex64::new(*w, 0.0);
        }
        Ok(m)
    }

    /// Canonical text form, e.g. `1*XII+1*IXI+1*IIX`.
    pub fn describe(&self) -> String {
        self.terms
            .iter()
            .map(|(w, p)| format!("{w}*{p}"))
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Eigendecomposition `H = V diag(E) V^dagger` with ascending energies.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    spec: TfimSpec,
    energies: Vec<f64>,
    vectors: DMatrix<Complex64>,
    ground_degenerate: bool,
}

impl EigenSystem {
    pub fn new(spec: &TfimSpec) -> Result<Self> {
        spec.check_size()?;
        let dim = 1usize << spec.n_sites;
        // TFIM terms (ZZ and X) have real matrices.
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for (w, p) in spec.terms() {
            for b in 0..dim {
                let (ph, b2) = p.apply_to_index(b);
                h[(b2, b)] += w * ph.re;
            }
        }
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .total_cmp(&eig.eigenvalues[b])
                .then(a.cmp(&b))
        });
        let energies: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(dim, dim, |r, c| Complex64::new(eig.eigenvectors[(r, order[c])], 0.0));
        let ground_degenerate = dim > 1 && energies[1] - energies[0] < DEGENERACY_TOLERANCE;
        if ground_degenerate {
            log::warn!(
                "ground state degenerate (gap {:e}); using the lowest-index eigenvector",
                energies[1] - energies[0]
            );
        }
        Ok(Self {
            spec: spec.clone(),
            energies,
            vectors,
            ground_degenerate,
        })
    }

    pub fn spec(&self) -> &TfimSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn vectors(&self) -> &DMatrix<Complex64> {
        &self.vectors
    }

    pub fn ground_degenerate(&self) -> bool {
        self.ground_degenerate
    }

    pub fn ground_state(&self) -> DVector<Complex64> {
        self.vectors.column(0).into_owned()
    }

    /// `V diag(E) V^dagger`.
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            self.energies.iter().map(|&e| Complex64::new(e, 0.0)),
        ));
        &self.vectors * d * self.vectors.adjoint()
    }

    /// `e^{-iHt}`.
    pub fn propagator(&self, t: f64) -> DMatrix<Complex64> {
        let mut vp = self.vectors.clone();
        for (c, e) in self.energies.iter().enumerate() {
            let ph = Complex64::from_polar(1.0, -e * t);
            vp.column_mut(c).iter_mut().for_each(|v| *v *= ph);
        }
        vp * self.vectors.adjoint()
    }
}

/// Heisenberg evolution of a fixed operator, `O(t) = e^{iHt} O e^{-iHt}`,
/// with `V^dagger O V` cached.
#[derive(Debug, Clone)]
pub struct HeisenbergEvolver<'a> {
    eig: &'a EigenSystem,
    o_eig: DMatrix<Complex64>,
}

impl<'a> HeisenbergEvolver<'a> {
    pub fn new(eig: &'a EigenSystem, o: &DMatrix<Complex64>) -> Result<Self> {
        if o.nrows() != eig.dim() || o.ncols() != eig.dim() {
            return Err(Error::SizeMismatch {
                expected: eig.dim(),
                got: o.nrows(),
            });
        }
        let o_eig = eig.vectors.adjoint() * o * &eig.vectors;
        Ok(Self { eig, o_eig })
    }

    pub fn at(&self, t: f64) -> DMatrix<Complex64> {
        let e = &self.eig.energies;
        let m = DMatrix::from_fn(self.eig.dim(), self.eig.dim(), |r, c| {
            self.o_eig[(r, c)] * Complex64::from_polar(1.0, (e[r] - e[c]) * t)
        });
        &self.eig.vectors * m * self.eig.vectors.adjoint()
    }
}

pub fn heisenberg_evolve(eig: &EigenSystem, o: &Observable, t: f64) -> Result<DMatrix<Complex64>> {
    Ok(HeisenbergEvolver::new(eig, &o.matrix()?)?.at(t))
}

/// `Tr[A P] / d` computed from the sparsity of `P`.
fn trace_with_pauli(a: &DMatrix<Complex64>, p: &PauliString) -> Complex64 {
    let dim = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for b in 0..dim {
        let (ph, b2) = p.apply_to_index(b);
        acc += a[(b, b2)] * ph;
    }
    acc / dim as f64
}

fn real_coefficient(value: Complex64, p: &PauliString) -> Result<f64> {
    if value.im.abs() > IMAG_TOLERANCE {
        return Err(Error::NonHermitian {
            label: p.label(),
            imag: value.im,
        });
    }
    Ok(value.re)
}

/// `c_i = Tr[O(t) sigma_i] / d` for every element of `basis`.
pub fn pauli_coefficients(ot: &DMatrix<Complex64>, basis: &PauliBasis) -> Result<Vec<f64>> {
    let dim = 1usize << basis.n_sites();
    if ot.nrows() != dim || ot.ncols() != dim {
        return Err(Error::SizeMismatch {
            expected: dim,
            got: ot.nrows(),
        });
    }
    basis
        .elements()
        .iter()
        .map(|p| real_coefficient(trace_with_pauli(ot, p), p))
        .collect()
}

/// Exact coefficient trajectory on the truncated basis of `policy`.
pub fn generate_trajectory(
    spec: &TfimSpec,
    o: &Observable,
    policy: &TruncationPolicy,
    grid: &[f64],
) -> Result<Trajectory> {
    let eig = EigenSystem::new(spec)?;
    generate_trajectory_with(&eig, o, policy, grid)
}

pub fn generate_trajectory_with(
    eig: &EigenSystem,
    o: &Observable,
    policy: &TruncationPolicy,
    grid: &[f64],
) -> Result<Trajectory> {
    if o.n_sites() != eig.spec.n_sites {
        return Err(Error::SizeMismatch {
            expected: eig.spec.n_sites,
            got: o.n_sites(),
        });
    }
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("time grid must be non-empty and strictly increasing".into()));
    }
    let tb = truncated_basis(policy, &o.strings())?;
    let evolver = HeisenbergEvolver::new(eig, &o.matrix()?)?;
    let rows: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&t| pauli_coefficients(&evolver.at(t), &tb.basis))
        .collect::<Result<_>>()?;
    let k = tb.basis.len();
    let coeffs = Array2::from_shape_fn((grid.len(), k), |(j, i)| rows[j][i]);
    let mut meta = Metadata::new();
    eig.spec.record(&mut meta);
    meta.set("observable", o.describe());
    meta.set("policy", policy.describe());
    meta.set("seed", "none");
    meta.set("basis_windowed", tb.windowed);
    meta.set("basis_size", k);
    Trajectory::new(grid.to_vec(), tb.basis, coeffs, meta)
}

/// `Tr[O(t_j) sigma] = d c_sigma(t_j)` read off a trajectory.
pub fn one_point_function(traj: &Trajectory, init: &PauliString) -> Result<Vec<f64>> {
    let n = traj.basis().n_sites();
    if init.n_sites() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: init.n_sites(),
        });
    }
    if init.is_identity() {
        return Err(Error::IdentityString);
    }
    let d = (1u64 << n) as f64;
    match traj.column(init) {
        Some(col) => Ok(col.iter().map(|c| d * c).collect()),
        None if !init.commutes(SymmetryOperator::bit_flip(n).generator())? => Ok(vec![0.0; traj.n_times()]),
        None => Err(Error::InvalidArgument(format!("{init} is not in the trajectory basis"))),
    }
}

/// Prepares `rho = (sigma + I)/d`, evolves it in the Schrodinger picture and
/// returns `Tr[O rho(t)]`; with `shots`, each term is estimated from
/// binomial +-1 outcomes drawn from a generator seeded with `seed`.
pub fn measure_coefficient_via_state(
    eig: &EigenSystem,
    o: &Observable,
    sigma: &PauliString,
    t: f64,
    shots: Option<u64>,
    seed: u64,
) -> Result<f64> {
    let n = eig.spec.n_sites;
    if sigma.n_sites() != n || o.n_sites() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: sigma.n_sites(),
        });
    }
    if shots.is_some() && sigma.is_identity() {
        return Err(Error::IdentityString);
    }
    let dim = eig.dim();
    let rho0 = (sigma.to_matrix()? + DMatrix::identity(dim, dim)) / Complex64::new(dim as f64, 0.0);
    let u = eig.propagator(t);
    let rho_t = &u * rho0 * u.adjoint();
    let expectations: Vec<f64> = o
        .terms()
        .iter()
        .map(|(_, p)| trace_with_pauli(&rho_t, p).re * dim as f64)
        .collect();
    match shots {
        None => Ok(o.terms().iter().zip(&expectations).map(|((w, _), e)| w * e).sum()),
        Some(0) => Err(Error::InvalidArgument("shots must be positive".into())),
        Some(shots) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut total = 0.0;
            for ((w, _), e) in o.terms().iter().zip(&expectations) {
                let p_plus = ((1.0 + e.clamp(-1.0, 1.0)) / 2.0).clamp(0.0, 1.0);
                let dist = Binomial::new(shots, p_plus)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                let k = dist.sample(&mut rng) as f64;
                total += w * (2.0 * k / shots as f64 - 1.0);
            }
            Ok(total)
        }
    }
}

fn excitation_amplitudes(eig: &EigenSystem, o: &Observable) -> Result<Vec<f64>> {
    let psi = o.matrix()? * eig.ground_state();
    let a = eig.vectors.adjoint() * psi;
    Ok(a.iter().map(|z| z.norm_sqr()).collect())
}

/// `C(t) = <Omega| O(t) O |Omega>` on `grid`.
pub fn two_point_function(eig: &EigenSystem, o: &Observable, grid: &[f64]) -> Result<Vec<Complex64>> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("grid must be increasing".into()));
    }
    let weights = excitation_amplitudes(eig, o)?;
    let e0 = eig.energies[0];
    Ok(grid
        .iter()
        .map(|&t| {
            weights
                .iter()
                .zip(&eig.energies)
                .map(|(w, e)| Complex64::from_polar(*w, -(e - e0) * t))
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLine {
    /// Excitation energy `E_n - E_0`.
    pub frequency: f64,
    /// `|<n|O|Omega>|^2`, summed over degenerate `n`.
    pub weight: f64,
}

/// Lines of the spectral function; degenerate levels are merged and
/// zero-weight lines dropped.
pub fn exact_spectral_lines(eig: &EigenSystem, o: &Observable) -> Result<Vec<SpectralLine>> {
    let weights = excitation_amplitudes(eig, o)?;
    let total: f64 = weights.iter().sum();
    let cutoff = 1e-12 * total.max(1.0);
    let e0 = eig.energies[0];
    let mut lines: Vec<SpectralLine> = Vec::new();
    for (w, e) in weights.iter().zip(&eig.energies) {
        let f = e - e0;
        match lines.last_mut() {
            Some(last) if (f - last.frequency).abs() < 1e-9 => last.weight += w,
            _ => lines.push(SpectralLine {
                frequency: f,
                weight: *w,
            }),
        }
    }
    lines.retain(|l| l.weight > cutoff);
    Ok(lines)
}

/// Evolution channel applied to the input Pauli string of a process row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel {
    Unitary,
    /// Unitary evolution followed by global depolarizing decay `e^{-gamma t}`
    /// of the traceless part.
    Depolarizing { gamma: f64 },
}

/// `[chi_t]_{O,i} = Tr[O E_t(sigma_i)] / d` for each `sigma_i` in `basis`.
pub fn process_matrix_row(
    eig: &EigenSystem,
    o: &Observable,
    basis: &PauliBasis,
    t: f64,
    channel: Channel,
) -> Result<Vec<f64>> {
    if basis.n_sites() != eig.spec.n_sites {
        return Err(Error::SizeMismatch {
            expected: eig.spec.n_sites,
            got: basis.n_sites(),
        });
    }
    let dim = eig.dim();
    let om = o.matrix()?;
    let u = eig.propagator(t);
    let ud = u.adjoint();
    let dimc = Complex64::new(dim as f64, 0.0);
    basis
        .elements()
        .iter()
        .map(|p| {
            let mut out = &u * p.to_matrix()? * &ud;
            if let Channel::Depolarizing { gamma } = channel {
                let f = (-gamma * t).exp();
                let tr = out.trace();
                out *= Complex64::new(f, 0.0);
                for k in 0..dim {
                    out[(k, k)] += tr * (1.0 - f) / dimc;
                }
            }
            let value = (&om * out).trace() / dimc;
            real_coefficient(value, p)
        })
        .collect()
}
