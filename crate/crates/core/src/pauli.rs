//! Pauli strings in symplectic (x-mask, z-mask) form.
//!
//! Site `i` maps to bit `i` of both masks. In labels site 0 is the leftmost
//! character; in dense matrices site 0 is the leftmost Kronecker factor, i.e.
//! the most significant bit of the computational-basis index.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest chain for which dense `2^N x 2^N` matrices are built.
pub const DENSE_ORACLE_LIMIT: usize = 8;

/// Largest chain for which the full `4^N` basis is enumerated.
const FULL_BASIS_LIMIT: usize = 12;

/// A power of `i`: the exponent is kept modulo 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_exponent(exp: i64) -> Self {
        Phase(exp.rem_euclid(4) as u8)
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl std::ops::Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            0 => "+1",
            1 => "+i",
            2 => "-1",
            _ => "-i",
        })
    }
}

/// Tensor product of single-site Paulis over `n_sites` sites (at most 64).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    n_sites: usize,
    x: u64,
    z: u64,
}

fn site_mask(n_sites: usize) -> u64 {
    if n_sites == 64 {
        u64::MAX
    } else {
        (1u64 << n_sites) - 1
    }
}

impl PauliString {
    pub fn new(n_sites: usize, x_mask: u64, z_mask: u64) -> Result<Self> {
        if n_sites == 0 || n_sites > 64 {
            return Err(Error::InvalidArgument(format!(
                "n_sites must be in 1..=64, got {n_sites}"
            )));
        }
        let m = site_mask(n_sites);
        if x_mask & !m != 0 || z_mask & !m != 0 {
            return Err(Error::InvalidArgument(format!(
                "mask has bits beyond {n_sites} sites"
            )));
        }
        Ok(Self {
            n_sites,
            x: x_mask,
            z: z_mask,
        })
    }

    pub fn identity(n_sites: usize) -> Self {
        assert!((1..=64).contains(&n_sites), "n_sites must be in 1..=64");
        Self {
            n_sites,
            x: 0,
            z: 0,
        }
    }

    /// Single-site Pauli `letter` on `site`, identity elsewhere.
    pub fn single(n_sites: usize, site: usize, letter: char) -> Result<Self> {
        if site >= n_sites {
            return Err(Error::InvalidArgument(format!(
                "site {site} out of range for {n_sites} sites"
            )));
        }
        let bit = 1u64 << site;
        let (x, z) = match letter {
            'I' => (0, 0),
            'X' => (bit, 0),
            'Y' => (bit, bit),
            'Z' => (0, bit),
            _ => return Err(Error::InvalidLabel(letter.to_string())),
        };
        Self::new(n_sites, x, z)
    }

    /// Product of `letter` on every site, e.g. the bit-flip operator for `'X'`.
    pub fn uniform(n_sites: usize, letter: char) -> Result<Self> {
        let m = site_mask(n_sites);
        let (x, z) = match letter {
            'I' => (0, 0),
            'X' => (m, 0),
            'Y' => (m, m),
            'Z' => (0, m),
            _ => return Err(Error::InvalidLabel(letter.to_string())),
        };
        Self::new(n_sites, x, z)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    /// Bitmask of sites carrying a non-identity letter.
    pub fn support(&self) -> u64 {
        self.x | self.z
    }

    pub fn weight(&self) -> u32 {
        self.support().count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.support() == 0
    }

    pub fn letter(&self, site: usize) -> char {
        let bx = (self.x >> site) & 1;
        let bz = (self.z >> site) & 1;
        match (bx, bz) {
            (0, 0) => 'I',
            (1, 0) => 'X',
            (1, 1) => 'Y',
            _ => 'Z',
        }
    }

    pub fn label(&self) -> String {
        (0..self.n_sites).map(|i| self.letter(i)).collect()
    }

    /// Base-4 key with site 0 most significant and I < X < Y < Z; ordering by
    /// this key is lexicographic ordering of the labels.
    pub fn sort_key(&self) -> u128 {
        (0..self.n_sites).fold(0u128, |acc, i| {
            let code = match self.letter(i) {
                'I' => 0,
                'X' => 1,
                'Y' => 2,
                _ => 3,
            };
            acc * 4 + code
        })
    }

    fn check_size(&self, other: &PauliString) -> Result<()> {
        if self.n_sites != other.n_sites {
            return Err(Error::SizeMismatch {
                expected: self.n_sites,
                got: other.n_sites,
            });
        }
        Ok(())
    }

    /// `self * other = phase * result`.
    pub fn product(&self, other: &PauliString) -> Result<(Phase, PauliString)> {
        self.check_size(other)?;
        let (ax, az, bx, bz) = (self.x, self.z, other.x, other.z);
        let a_x = ax & !az;
        let a_y = ax & az;
        let a_z = !ax & az;
        let b_x = bx & !bz;
        let b_y = bx & bz;
        let b_z = !bx & bz;
        // XY = iZ, YZ = iX, ZX = iY and the reversed orders pick up -i.
        let plus = (a_x & b_y) | (a_y & b_z) | (a_z & b_x);
        let minus = (a_y & b_x) | (a_z & b_y) | (a_x & b_z);
        let phase = Phase::from_exponent(plus.count_ones() as i64 - minus.count_ones() as i64);
        Ok((
            phase,
            PauliString {
                n_sites: self.n_sites,
                x: ax ^ bx,
                z: az ^ bz,
            },
        ))
    }

    /// Symplectic commutation test.
    pub fn commutes(&self, other: &PauliString) -> Result<bool> {
        self.check_size(other)?;
        let overlap = (self.x & other.z) ^ (self.z & other.x);
        Ok(overlap.count_ones() % 2 == 0)
    }

    /// Action on a computational basis state: `P|b> = phase |b'>`.
    pub fn apply_to_index(&self, b: usize) -> (Complex64, usize) {
        let (xi, zi) = self.index_masks();
        let n_y = (self.x & self.z).count_ones() as i64;
        let sign = if (b & zi).count_ones() % 2 == 0 { 0 } else { 2 };
        (Phase::from_exponent(n_y + sign).to_complex(), b ^ xi)
    }

    /// Masks re-expressed in computational-index bit order.
    pub fn index_masks(&self) -> (usize, usize) {
        let mut xi = 0usize;
        let mut zi = 0usize;
        for i in 0..self.n_sites {
            let bit = self.n_sites - 1 - i;
            if (self.x >> i) & 1 == 1 {
                xi |= 1 << bit;
            }
            if (self.z >> i) & 1 == 1 {
                zi |= 1 << bit;
            }
        }
        (xi, zi)
    }

    pub fn to_matrix(&self) -> Result<DMatrix<Complex64>> {
        self.to_matrix_with_limit(DENSE_ORACLE_LIMIT)
    }

    pub fn to_matrix_with_limit(&self, limit: usize) -> Result<DMatrix<Complex64>> {
        if self.n_sites > limit {
            return Err(Error::OracleLimit {
                n_sites: self.n_sites,
                limit,
            });
        }
        let dim = 1usize << self.n_sites;
        let mut m = DMatrix::zeros(dim, dim);
        for b in 0..dim {
            let (ph, b2) = self.apply_to_index(b);
            m[(b2, b)] = ph;
        }
        Ok(m)
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PauliString {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.n_sites
            .cmp(&other.n_sites)
            .then_with(|| self.sort_key().cmp(&other.sort_key()))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.len() > 64 {
            return Err(Error::InvalidLabel(s.to_string()));
        }
        let mut x = 0u64;
        let mut z = 0u64;
        for (i, c) in s.chars().enumerate() {
            let bit = 1u64 << i;
            match c {
                'I' => {}
                'X' => x |= bit,
                'Y' => {
                    x |= bit;
                    z |= bit;
                }
                'Z' => z |= bit,
                _ => return Err(Error::InvalidLabel(s.to_string())),
            }
        }
        PauliString::new(s.chars().count(), x, z)
    }
}

/// Ordered, duplicate-free set of Pauli strings on a common chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliBasis {
    n_sites: usize,
    elements: Vec<PauliString>,
    labels: Vec<String>,
}

impl PauliBasis {
    /// Sorts lexicographically by label and drops duplicates.
    pub fn from_strings(n_sites: usize, strings: impl IntoIterator<Item = PauliString>) -> Result<Self> {
        let mut elements = Vec::new();
        for s in strings {
            if s.n_sites() != n_sites {
                return Err(Error::SizeMismatch {
                    expected: n_sites,
                    got: s.n_sites(),
                });
            }
            elements.push(s);
        }
        elements.sort();
        elements.dedup();
        let labels = elements.iter().map(PauliString::label).collect();
        Ok(Self {
            n_sites,
            elements,
            labels,
        })
    }

    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let strings = labels
            .iter()
            .map(|l| l.as_ref().parse::<PauliString>())
            .collect::<Result<Vec<_>>>()?;
        let n = strings.first().map(PauliString::n_sites).ok_or_else(|| {
            Error::InvalidArgument("basis needs at least one label".into())
        })?;
        let basis = Self::from_strings(n, strings)?;
        if basis.len() != labels.len() {
            return Err(Error::InvalidArgument("duplicate labels in basis".into()));
        }
        Ok(basis)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[PauliString] {
        &self.elements
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, p: &PauliString) -> Option<usize> {
        self.elements.binary_search(p).ok()
    }

    pub fn contains(&self, p: &PauliString) -> bool {
        self.index_of(p).is_some()
    }

    pub fn without_identity(&self) -> PauliBasis {
        let elements: Vec<_> = self
            .elements
            .iter()
            .copied()
            .filter(|p| !p.is_identity())
            .collect();
        let labels = elements.iter().map(PauliString::label).collect();
        PauliBasis {
            n_sites: self.n_sites,
            elements,
            labels,
        }
    }

    pub fn is_subset_of(&self, other: &PauliBasis) -> bool {
        self.elements.iter().all(|p| other.contains(p))
    }
}

/// All `4^N` strings in lexicographic label order (identity first).
pub fn enumerate_full_basis(n_sites: usize) -> Result<PauliBasis> {
    if n_sites == 0 || n_sites > FULL_BASIS_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "full basis enumeration supports 1..={FULL_BASIS_LIMIT} sites, got {n_sites}"
        )));
    }
    let total = 1usize << (2 * n_sites);
    let mut elements = Vec::with_capacity(total);
    for k in 0..total {
        let mut x = 0u64;
        let mut z = 0u64;
        for i in 0..n_sites {
            let digit = (k >> (2 * (n_sites - 1 - i))) & 3;
            let bit = 1u64 << i;
            match digit {
                1 => x |= bit,
                2 => {
                    x |= bit;
                    z |= bit
                }
                3 => z |= bit,
                _ => {}
            }
        }
        elements.push(PauliString { n_sites, x, z });
    }
    let labels = elements.iter().map(PauliString::label).collect();
    Ok(PauliBasis {
        n_sites,
        elements,
        labels,
    })
}

/// Global symmetry generator; any Pauli string squares to the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymmetryOperator {
    generator: PauliString,
}

impl SymmetryOperator {
    pub fn new(generator: PauliString) -> Result<Self> {
        let (phase, sq) = generator.product(&generator)?;
        if phase != Phase::ONE || !sq.is_identity() {
            return Err(Error::InvalidArgument("symmetry generator must square to identity".into()));
        }
        Ok(Self { generator })
    }

    /// The bit-flip operator, X on every site.
    pub fn bit_flip(n_sites: usize) -> Self {
        Self {
            generator: PauliString::uniform(n_sites, 'X').expect("valid site count"),
        }
    }

    pub fn generator(&self) -> &PauliString {
        &self.generator
    }
}

/// Keeps exactly the strings commuting with the symmetry generator.
pub fn symmetry_filter(basis: &PauliBasis, s: &SymmetryOperator) -> Result<PauliBasis> {
    if basis.n_sites() != s.generator.n_sites() {
        return Err(Error::SizeMismatch {
            expected: basis.n_sites(),
            got: s.generator.n_sites(),
        });
    }
    let mut elements = Vec::with_capacity(basis.len() / 2 + 1);
    for p in basis.elements() {
        if p.commutes(&s.generator)? {
            elements.push(*p);
        }
    }
    let labels = elements.iter().map(PauliString::label).collect();
    Ok(PauliBasis {
        n_sites: basis.n_sites(),
        elements,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationMode {
    Full,
    Window,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationPolicy {
    pub mode: TruncationMode,
    pub window_radius: usize,
    /// Spreading velocity; only used by [`TruncationPolicy::suggested_radius`].
    pub velocity: Option<f64>,
    pub symmetry_filter: bool,
    pub periodic: bool,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            mode: TruncationMode::Full,
            window_radius: 0,
            velocity: None,
            symmetry_filter: false,
            periodic: true,
        }
    }
}

impl TruncationPolicy {
    pub fn full(symmetry_filter: bool) -> Self {
        Self {
            symmetry_filter,
            ..Self::default()
        }
    }

    pub fn window(radius: usize, symmetry_filter: bool) -> Self {
        Self {
            mode: TruncationMode::Window,
            window_radius: radius,
            symmetry_filter,
            ..Self::default()
        }
    }

    /// `ceil(v T)` when a velocity is configured.
    pub fn suggested_radius(&self, t_total: f64) -> Option<usize> {
        self.velocity.map(|v| (v * t_total).ceil().max(0.0) as usize)
    }

    /// Compact text form used in file metadata, e.g. `window:r=1,sym=1,pbc=1`.
    pub fn describe(&self) -> String {
        let mode = match self.mode {
            TruncationMode::Full => "full".to_string(),
            TruncationMode::Window => format!("window:r={}", self.window_radius),
        };
        let sep = if self.mode == TruncationMode::Full { ':' } else { ',' };
        format!(
            "{mode}{sep}sym={},pbc={}",
            u8::from(self.symmetry_filter),
            u8::from(self.periodic)
        )
    }
}

/// Result of [`truncated_basis`]; `windowed` counts strings before the
/// symmetry filter.
#[derive(Debug, Clone)]
pub struct TruncatedBasis {
    pub basis: PauliBasis,
    pub windowed: usize,
}

impl TruncatedBasis {
    pub fn count(&self) -> usize {
        self.basis.len()
    }
}

/// Sites of the contiguous window of radius `r` around `support`.
fn window_mask(support: u64, n_sites: usize, radius: usize, periodic: bool) -> u64 {
    let all = site_mask(n_sites);
    let sites: Vec<usize> = (0..n_sites).filter(|i| (support >> i) & 1 == 1).collect();
    if sites.is_empty() {
        return 0;
    }
    if !periodic {
        let lo = sites[0].saturating_sub(radius);
        let hi = (sites[sites.len() - 1] + radius).min(n_sites - 1);
        return (lo..=hi).fold(0, |m, i| m | (1u64 << i));
    }
    // Minimal covering arc: start right after the largest cyclic gap.
    let k = sites.len();
    let mut best_gap = 0;
    let mut start = sites[0];
    for j in 0..k {
        let a = sites[j];
        let b = sites[(j + 1) % k];
        let gap = if k == 1 { n_sites } else { (b + n_sites - a) % n_sites };
        if gap > best_gap {
            best_gap = gap;
            start = b;
        }
    }
    let arc_len = n_sites - best_gap + 1;
    let len = arc_len + 2 * radius;
    if len >= n_sites {
        return all;
    }
    let first = (start + n_sites - radius % n_sites) % n_sites;
    (0..len).fold(0, |m, off| m | (1u64 << ((first + off) % n_sites)))
}

/// Non-identity strings supported inside some window around an observable
/// term, optionally restricted to the bit-flip sector.
pub fn truncated_basis(policy: &TruncationPolicy, observable_terms: &[PauliString]) -> Result<TruncatedBasis> {
    let first = observable_terms.first().ok_or(Error::EmptyObservable)?;
    let n = first.n_sites();
    for t in observable_terms {
        if t.n_sites() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                got: t.n_sites(),
            });
        }
    }
    let windowed = match policy.mode {
        TruncationMode::Full => enumerate_full_basis(n)?.without_identity(),
        TruncationMode::Window => {
            let windows: BTreeSet<u64> = observable_terms
                .iter()
                .filter(|t| !t.is_identity())
                .map(|t| window_mask(t.support(), n, policy.window_radius, policy.periodic))
                .collect();
            let mut strings = BTreeSet::new();
            for w in windows {
                let mut xs = w;
                loop {
                    let mut zs = w;
                    loop {
                        if xs | zs != 0 {
                            strings.insert(PauliString { n_sites: n, x: xs, z: zs });
                        }
                        if zs == 0 {
                            break;
                        }
                        zs = (zs - 1) & w;
                    }
                    if xs == 0 {
                        break;
                    }
                    xs = (xs - 1) & w;
                }
            }
            PauliBasis::from_strings(n, strings)?
        }
    };
    let count = windowed.len();
    let basis = if policy.symmetry_filter {
        symmetry_filter(&windowed, &SymmetryOperator::bit_flip(n))?
    } else {
        windowed
    };
    Ok(TruncatedBasis {
        basis,
        windowed: count,
    })
}

/// Basis size for each radius in `radii` (window mode, other settings kept).
pub fn radius_sweep(
    policy: &TruncationPolicy,
    observable_terms: &[PauliString],
    radii: impl IntoIterator<Item = usize>,
) -> Result<Vec<(usize, usize)>> {
    radii
        .into_iter()
        .map(|r| {
            let p = TruncationPolicy {
                mode: TruncationMode::Window,
                window_radius: r,
                ..policy.clone()
            };
            truncated_basis(&p, observable_terms).map(|tb| (r, tb.count()))
        })
        .collect()
}
