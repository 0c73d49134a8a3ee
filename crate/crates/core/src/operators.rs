//! Product-operator basis, density matrices and RF rotations.
//!
//! Single-spin operators are half Pauli matrices; a multi-spin product
//! operator is the plain ordered Kronecker product with identities on the
//! unlabelled positions. The basis is orthogonal but not normalized:
//! `Tr(B_L^2) = 2^n / 4^m` where `m` counts the non-identity factors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{bit, SpinSystem};

pub type CMatrix = DMatrix<Complex64>;

/// Pulse phase that rotates about +y.
pub const PHASE_Y: f64 = 0.0;
/// Pulse phase that rotates about -y.
pub const PHASE_MINUS_Y: f64 = std::f64::consts::PI;
/// Pulse phase that rotates about +x.
pub const PHASE_X: f64 = std::f64::consts::FRAC_PI_2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    O,
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::O, Axis::X, Axis::Y, Axis::Z];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Axis::O => 'o',
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }

    fn from_letter(c: char) -> Option<Axis> {
        match c.to_ascii_lowercase() {
            'o' => Some(Axis::O),
            'x' => Some(Axis::X),
            'y' => Some(Axis::Y),
            'z' => Some(Axis::Z),
            _ => None,
        }
    }

    /// Entry `<row|I_axis|col>` of the single-spin operator, bits as in
    /// [`crate::system`] (false = up).
    #[inline]
    fn entry(self, row: bool, col: bool) -> Complex64 {
        match (self, row, col) {
            (Axis::O, r, c) if r == c => Complex64::new(1.0, 0.0),
            (Axis::X, r, c) if r != c => Complex64::new(0.5, 0.0),
            (Axis::Y, false, true) => Complex64::new(0.0, -0.5),
            (Axis::Y, true, false) => Complex64::new(0.0, 0.5),
            (Axis::Z, false, false) => Complex64::new(0.5, 0.0),
            (Axis::Z, true, true) => Complex64::new(-0.5, 0.0),
            _ => ZERO,
        }
    }
}

/// One element of the product-operator basis, e.g. `x z` for I1x I2z.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProductOperatorLabel(Vec<Axis>);

impl ProductOperatorLabel {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidLabel("label has no spins".into()));
        }
        if axes.iter().all(|a| *a == Axis::O) {
            return Err(Error::InvalidLabel(
                "the all-identity label is not part of the traceless basis".into(),
            ));
        }
        Ok(ProductOperatorLabel(axes))
    }

    /// Every traceless basis label for `n` spins, 4^n - 1 in total, ordered
    /// by base-4 code with spin 1 most significant.
    pub fn all(n: usize) -> Vec<Self> {
        let total = 1usize << (2 * n);
        (1..total)
            .map(|code| {
                let axes = (0..n)
                    .map(|j| Axis::ALL[(code >> (2 * (n - 1 - j))) & 3])
                    .collect();
                ProductOperatorLabel(axes)
            })
            .collect()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.0
    }

    pub fn n_spins(&self) -> usize {
        self.0.len()
    }

    /// Number of non-identity factors.
    pub fn weight(&self) -> usize {
        self.0.iter().filter(|a| **a != Axis::O).count()
    }

    /// True when the operator is diagonal (built from identities and z only).
    pub fn is_diagonal(&self) -> bool {
        self.0.iter().all(|a| matches!(a, Axis::O | Axis::Z))
    }

    /// Tr(B_L^2) = 2^n / 4^m.
    pub fn norm_squared(&self) -> f64 {
        (1u64 << self.n_spins()) as f64 / 4f64.powi(self.weight() as i32)
    }

    /// Bit mask of spins carrying a transverse (x or y) factor.
    fn flip_mask(&self) -> usize {
        let n = self.n_spins();
        self.0
            .iter()
            .enumerate()
            .filter(|(_, a)| matches!(a, Axis::X | Axis::Y))
            .fold(0, |m, (j, _)| m | crate::system::spin_mask(j, n))
    }

    /// Sparse form: each row of a product operator holds exactly one nonzero.
    pub(crate) fn sparse(&self) -> SparseOperator {
        let n = self.n_spins();
        let dim = 1usize << n;
        let mask = self.flip_mask();
        let mut cols = Vec::with_capacity(dim);
        let mut vals = Vec::with_capacity(dim);
        for r in 0..dim {
            let c = r ^ mask;
            let v = self
                .0
                .iter()
                .enumerate()
                .fold(Complex64::new(1.0, 0.0), |acc, (j, a)| {
                    acc * a.entry(bit(r, j, n), bit(c, j, n))
                });
            cols.push(c);
            vals.push(v);
        }
        SparseOperator { cols, vals }
    }
}

impl fmt::Display for ProductOperatorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", a.letter())?;
        }
        Ok(())
    }
}

impl FromStr for ProductOperatorLabel {
    type Err = Error;

    /// Accepts space-separated (`"x z"`) or packed (`"xz"`) axis letters.
    fn from_str(s: &str) -> Result<Self> {
        let axes = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| {
                Axis::from_letter(c)
                    .ok_or_else(|| Error::InvalidLabel(format!("unknown axis '{c}' in \"{s}\"")))
            })
            .collect::<Result<Vec<_>>>()?;
        ProductOperatorLabel::new(axes)
    }
}

impl Serialize for ProductOperatorLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProductOperatorLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Row-wise sparse matrix with one nonzero per row.
#[derive(Clone, Debug)]
pub(crate) struct SparseOperator {
    pub cols: Vec<usize>,
    pub vals: Vec<Complex64>,
}

/// Dense matrix of a basis operator.
pub fn product_operator(label: &ProductOperatorLabel) -> CMatrix {
    let sp = label.sparse();
    let dim = sp.cols.len();
    let mut m = CMatrix::zeros(dim, dim);
    for (r, (&c, &v)) in sp.cols.iter().zip(&sp.vals).enumerate() {
        m[(r, c)] = v;
    }
    m
}

/// Real expansion coefficients of a deviation density matrix over the
/// product-operator basis.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    n: usize,
    entries: BTreeMap<ProductOperatorLabel, f64>,
}

impl CoefficientVector {
    pub fn new(n: usize) -> Self {
        CoefficientVector {
            n,
            entries: BTreeMap::new(),
        }
    }

    /// Builds from `(label, value)` pairs; repeated labels accumulate.
    pub fn from_terms<'a, I>(n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut v = CoefficientVector::new(n);
        for (label, q) in terms {
            let label: ProductOperatorLabel = label.parse()?;
            let prev = v.get(&label);
            v.insert(label, prev + q)?;
        }
        Ok(v)
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, label: ProductOperatorLabel, q: f64) -> Result<()> {
        if label.n_spins() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: label.n_spins(),
            });
        }
        if !q.is_finite() {
            return Err(Error::NonFiniteCoefficient {
                label: label.to_string(),
            });
        }
        self.entries.insert(label, q);
        Ok(())
    }

    pub fn get(&self, label: &ProductOperatorLabel) -> f64 {
        self.entries.get(label).copied().unwrap_or(0.0)
    }

    /// Convenience lookup by label text; unknown text reads as zero.
    pub fn get_str(&self, label: &str) -> f64 {
        label.parse().map(|l| self.get(&l)).unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProductOperatorLabel, f64)> {
        self.entries.iter().map(|(l, q)| (l, *q))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CoefficientVector {
            n: self.n,
            entries: self
                .entries
                .iter()
                .map(|(l, q)| (l.clone(), q * factor))
                .collect(),
        }
    }

    /// Splits into (off-diagonal, diagonal) parts.
    pub fn split_diagonal(&self) -> (Self, Self) {
        let mut off = CoefficientVector::new(self.n);
        let mut diag = CoefficientVector::new(self.n);
        for (l, q) in &self.entries {
            if l.is_diagonal() {
                diag.entries.insert(l.clone(), *q);
            } else {
                off.entries.insert(l.clone(), *q);
            }
        }
        (off, diag)
    }

    /// Union of two coefficient sets with disjoint labels.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let overlap: Vec<String> = other
            .entries
            .keys()
            .filter(|l| self.entries.contains_key(*l))
            .map(|l| l.to_string())
            .collect();
        if !overlap.is_empty() {
            return Err(Error::OverlappingLabels(overlap));
        }
        let mut out = self.clone();
        out.entries
            .extend(other.entries.iter().map(|(l, q)| (l.clone(), *q)));
        Ok(out)
    }
}

/// A Hermitian, traceless 2^n x 2^n matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationDensityMatrix {
    n: usize,
    m: CMatrix,
}

impl DeviationDensityMatrix {
    /// Validates Hermiticity and tracelessness. Tolerances scale with the
    /// largest entry so that matrices with O(10) entries are not rejected over
    /// rounding.
    pub fn new(m: CMatrix) -> Result<Self> {
        let dim = m.nrows();
        if m.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: m.ncols(),
            });
        }
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::DimensionMismatch {
                expected: dim.next_power_of_two().max(2),
                found: dim,
            });
        }
        let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let dev = hermitian_deviation(&m);
        if dev > 1e-12 * scale {
            return Err(Error::NotHermitian(dev));
        }
        let tr = m.trace().norm();
        if tr > 1e-12 * scale * dim as f64 {
            return Err(Error::NotTraceless(tr));
        }
        Ok(DeviationDensityMatrix {
            n: dim.trailing_zeros() as usize,
            m,
        })
    }

    pub fn zeros(n: usize) -> Self {
        let dim = 1 << n;
        DeviationDensityMatrix {
            n,
            m: CMatrix::zeros(dim, dim),
        }
    }

    /// Wraps a matrix produced by a Hermiticity- and trace-preserving map.
    pub(crate) fn from_raw(m: CMatrix) -> Self {
        let n = m.nrows().trailing_zeros() as usize;
        DeviationDensityMatrix { n, m }
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.m[(r, c)]
    }

    /// Largest |entry|.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Tr(rho^2), real for Hermitian input.
    pub fn purity_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum()
    }
}

impl std::ops::Add for &DeviationDensityMatrix {
    type Output = DeviationDensityMatrix;

    fn add(self, rhs: Self) -> DeviationDensityMatrix {
        DeviationDensityMatrix::from_raw(&self.m + &rhs.m)
    }
}

pub(crate) fn hermitian_deviation(m: &CMatrix) -> f64 {
    let dim = m.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..dim {
        for c in r..dim {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// sigma = sum_L q_L B_L.
pub fn coefficients_to_density(coeffs: &CoefficientVector) -> DeviationDensityMatrix {
    let n = coeffs.n_spins();
    let dim = 1usize << n;
    let mut m = CMatrix::zeros(dim, dim);
    for (label, q) in coeffs.iter() {
        let sp = label.sparse();
        for (r, (&c, &v)) in sp.cols.iter().zip(&sp.vals).enumerate() {
            m[(r, c)] += v * q;
        }
    }
    DeviationDensityMatrix::from_raw(m)
}

/// q_L = Tr(rho B_L) / Tr(B_L^2) for every basis label. Labels whose
/// coefficient is exactly zero are omitted.
pub fn density_to_coefficients(rho: &DeviationDensityMatrix) -> CoefficientVector {
    let mut out = CoefficientVector::new(rho.n_spins());
    for label in ProductOperatorLabel::all(rho.n_spins()) {
        let q = project(rho.matrix(), &label);
        if q != 0.0 {
            out.entries.insert(label, q);
        }
    }
    out
}

/// Re Tr(m B_L) / Tr(B_L^2).
pub(crate) fn project(m: &CMatrix, label: &ProductOperatorLabel) -> f64 {
    let sp = label.sparse();
    // Tr(m B) = sum_r sum_c m[r, c] B[c, r]; B[c, r] is nonzero only at r = cols[c].
    let tr: Complex64 = sp
        .cols
        .iter()
        .zip(&sp.vals)
        .enumerate()
        .map(|(c, (&r, &b))| m[(r, c)] * b)
        .sum();
    tr.re / label.norm_squared()
}

/// A unitary operator on the register.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix(CMatrix);

impl UnitaryMatrix {
    /// Wraps `m` after checking `m m^dagger = 1` to 1e-10.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let u = UnitaryMatrix(m);
        let dev = u.unitarity_deviation();
        if dev > 1e-10 {
            return Err(Error::InvalidAcquisition(format!(
                "matrix is not unitary (deviation {dev:.3e})"
            )));
        }
        Ok(u)
    }

    pub fn identity(dim: usize) -> Self {
        UnitaryMatrix(CMatrix::identity(dim, dim))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// max |U U^dagger - 1|.
    pub fn unitarity_deviation(&self) -> f64 {
        let p = &self.0 * self.0.adjoint();
        let dim = p.nrows();
        let mut worst: f64 = 0.0;
        for r in 0..dim {
            for c in 0..dim {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((p[(r, c)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// exp{-i theta (I_x sin(phase) + I_y cos(phase))} on each target spin, identity
/// elsewhere. Phase 0 rotates about +y and phase pi about -y.
pub fn rotation_pulse(
    sys: &SpinSystem,
    theta: f64,
    phase: f64,
    targets: &[usize],
) -> Result<UnitaryMatrix> {
    let n = sys.n_spins();
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
        return Err(Error::SpinOutOfRange { index: bad, n });
    }
    let (s, c) = (theta / 2.0).sin_cos();
    let (sp, cp) = phase.sin_cos();
    let rot = CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(c, 0.0),
            Complex64::new(-s * cp, -s * sp),
            Complex64::new(s * cp, -s * sp),
            Complex64::new(c, 0.0),
        ],
    );
    let id = CMatrix::identity(2, 2);
    let mut u = CMatrix::identity(1, 1);
    for j in 0..n {
        let factor = if targets.contains(&j) { &rot } else { &id };
        u = u.kronecker(factor);
    }
    Ok(UnitaryMatrix(u))
}

/// A pulse applied to every spin of the register.
pub fn nonselective_pulse(sys: &SpinSystem, theta: f64, phase: f64) -> UnitaryMatrix {
    let all: Vec<usize> = (0..sys.n_spins()).collect();
    rotation_pulse(sys, theta, phase, &all).expect("all spins are valid targets")
}
