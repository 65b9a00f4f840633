//! Dense complex linear algebra: states, operators, Kronecker products,
//! matrix exponentials and the biorthogonal eigen-decomposition of
//! non-Hermitian operators.
//!
//! Index convention for tensor products is row-major: in `a ⊗ b` the index
//! of `a` is the slow one.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::linalg::{Schur, SymmetricEigen};
use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Entrywise tolerance below which an operator is flagged Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on `| ‖ψ‖ - 1 |` for a state to count as normalized.
pub const NORMALIZED_TOL: f64 = 1e-12;
/// Minimum pairwise eigenvalue gap, relative to the largest matrix entry.
pub const DEGENERACY_TOL: f64 = 1e-8;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

fn all_finite<'a>(it: impl IntoIterator<Item = &'a C64>) -> bool {
    it.into_iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// A ket. Bras are kets conjugated at the point of use.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(amps))
    }

    pub fn from_vector(amps: DVector<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::Empty);
        }
        if !all_finite(amps.iter()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { amps })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Computational basis vector `|k⟩` of a `dim`-dimensional space.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::DimensionMismatch { expected: dim, found: k + 1 });
        }
        let mut v = DVector::from_element(dim, ZERO);
        v[k] = ONE;
        Ok(Self { amps: v })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn as_slice(&self) -> &[C64] {
        self.amps.as_slice()
    }

    pub fn into_vector(self) -> DVector<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() < NORMALIZED_TOL
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidParameter("cannot normalize a zero vector".into()));
        }
        Ok(Self { amps: self.amps.unscale(n) })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.amps.dotc(&other.amps))
    }

    /// `|⟨a|b⟩|² / (‖a‖² ‖b‖²)`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        let ov = self.inner(other)?;
        Ok(ov.norm_sqr() / (self.amps.norm_squared() * other.amps.norm_squared()))
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { amps: self.amps.map(|z| z * c) }
    }

    /// Same ray, with the largest-magnitude amplitude made real and positive.
    /// Ties resolve to the lowest index whose magnitude is within 1e-12 of the
    /// maximum.
    pub fn with_canonical_phase(&self) -> Self {
        let max = self.amps.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return self.clone();
        }
        let pivot = self
            .amps
            .iter()
            .find(|z| z.norm() >= max * (1.0 - 1e-12))
            .copied()
            .unwrap_or(ONE);
        let phase = pivot.conj() / pivot.norm();
        self.scaled(phase)
    }

    /// Overlap up to a global phase: `1 - |⟨a|b⟩|` for unit vectors.
    pub fn phase_distance(&self, other: &StateVector) -> Result<f64> {
        Ok(1.0 - self.inner(other)?.norm() / (self.norm() * other.norm()))
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// A square complex matrix acting on `StateVector`s.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    m: DMatrix<C64>,
    hermitian: bool,
}

impl Operator {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if m.is_empty() {
            return Err(Error::Empty);
        }
        if !all_finite(m.iter()) {
            return Err(Error::NonFinite);
        }
        Ok(Self::from_matrix_unchecked(m))
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        let hermitian = hermiticity_defect(&m) < HERMITIAN_TOL;
        Self { m, hermitian }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        Self::new(DMatrix::from_fn(dim, dim, f))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix_unchecked(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_matrix_unchecked(DMatrix::zeros(dim, dim))
    }

    pub fn diagonal(diag: &[C64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `|ket⟩⟨bra|`.
    pub fn outer(ket: &StateVector, bra: &StateVector) -> Self {
        Self::from_matrix_unchecked(ket.amplitudes() * bra.amplitudes().adjoint())
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `max |M - M†|` over all entries.
    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.m)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint(), hermitian: self.hermitian }
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self::from_matrix_unchecked(self.m.map(|z| z * c))
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), psi.dim())?;
        Ok(StateVector { amps: &self.m * psi.amplitudes() })
    }

    /// `⟨bra|M|ket⟩`.
    pub fn sandwich(&self, bra: &StateVector, ket: &StateVector) -> Result<C64> {
        check_dim(self.dim(), bra.dim())?;
        check_dim(self.dim(), ket.dim())?;
        Ok(bra.amplitudes().dotc(&(&self.m * ket.amplitudes())))
    }

    /// `⟨ψ|M|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn expectation(&self, psi: &StateVector) -> Result<C64> {
        Ok(self.sandwich(psi, psi)? / psi.amplitudes().norm_squared())
    }

    pub fn checked_add(&self, other: &Operator) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self::from_matrix_unchecked(&self.m + &other.m))
    }

    pub fn compose(&self, other: &Operator) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self::from_matrix_unchecked(&self.m * &other.m))
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self::from_matrix_unchecked(&self.m * &other.m - &other.m * &self.m))
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim(), other.dim(), "operator dimension mismatch");
        self.m.iter().zip(other.m.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

// Arithmetic on references panics on dimension mismatch, like nalgebra.
impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.m + &rhs.m)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.m - &rhs.m)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.m * &rhs.m)
    }
}

impl Mul<&Operator> for C64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scaled(self)
    }
}

impl Mul<&Operator> for f64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scaled(C64::new(self, 0.0))
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scaled(-ONE)
    }
}

/// Kronecker product, first factor slow.
pub trait Kron {
    fn kron(&self, other: &Self) -> Self;
}

impl Kron for StateVector {
    fn kron(&self, other: &Self) -> Self {
        StateVector { amps: self.amps.kronecker(&other.amps) }
    }
}

impl Kron for Operator {
    fn kron(&self, other: &Self) -> Self {
        Operator::from_matrix_unchecked(self.m.kronecker(&other.m))
    }
}

pub fn tensor<T: Kron>(a: &T, b: &T) -> T {
    a.kron(b)
}

/// Eigen-decomposition of a Hermitian operator: ascending eigenvalues and
/// unit eigenvectors as matrix columns, each with canonical phase.
pub fn hermitian_eig(h: &Operator) -> Result<(Vec<f64>, DMatrix<C64>)> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian(h.hermiticity_defect()));
    }
    let eig = SymmetricEigen::new(h.m.clone());
    let mut order: Vec<usize> = (0..h.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = DMatrix::zeros(h.dim(), h.dim());
    for (col, &k) in order.iter().enumerate() {
        let v = StateVector { amps: eig.eigenvectors.column(k).into_owned() }.with_canonical_phase();
        vecs.set_column(col, v.amplitudes());
    }
    Ok((values, vecs))
}

/// `e^{-iHt} ψ` with ħ = 1.
///
/// Hermitian generators go through their eigen-decomposition; everything
/// else through Padé scaling-and-squaring.
pub fn expm_apply(h: &Operator, t: f64, psi: &StateVector) -> Result<StateVector> {
    check_dim(h.dim(), psi.dim())?;
    if !t.is_finite() {
        return Err(Error::NonFinite);
    }
    let amps = if h.is_hermitian() {
        let (values, w) = hermitian_eig(h)?;
        let mut coeffs = w.adjoint() * psi.amplitudes();
        for (c, e) in coeffs.iter_mut().zip(values) {
            *c *= C64::from_polar(1.0, -e * t);
        }
        w * coeffs
    } else {
        propagator(h, t)?.m * psi.amplitudes()
    };
    StateVector::from_vector(amps)
}

/// The full propagator `e^{-iHt}`.
pub fn propagator(h: &Operator, t: f64) -> Result<Operator> {
    if !t.is_finite() {
        return Err(Error::NonFinite);
    }
    let u = if h.is_hermitian() {
        let (values, w) = hermitian_eig(h)?;
        let phases = DVector::from_iterator(values.len(), values.iter().map(|e| C64::from_polar(1.0, -e * t)));
        &w * DMatrix::from_diagonal(&phases) * w.adjoint()
    } else {
        h.m.map(|z| z * C64::new(0.0, -t)).exp()
    };
    Operator::new(u)
}

/// One eigen-pair of a nondegenerate operator: `M r = ω r` and `l† M = ω l†`,
/// normalized so that `l† r = 1`.
#[derive(Clone, Debug)]
pub struct EigenTriple {
    pub value: C64,
    pub right: StateVector,
    pub left: StateVector,
}

fn cmp_eigenvalues(a: C64, b: C64, tol: f64) -> Ordering {
    if (a.re - b.re).abs() > tol {
        a.re.total_cmp(&b.re)
    } else {
        a.im.total_cmp(&b.im)
    }
}

/// Right and left eigenvectors of a general (non-Hermitian) operator.
///
/// Right vectors are unit norm with canonical phase; left vectors are the
/// rows of the inverse eigenvector matrix, so `left_i† right_j = δ_ij`.
/// Triples are sorted by real part, then imaginary part, of the eigenvalue.
pub fn general_eig(m: &Operator) -> Result<Vec<EigenTriple>> {
    let n = m.dim();
    let scale = m.max_abs_entry();
    if n == 1 {
        let one = StateVector::basis(1, 0)?;
        return Ok(vec![EigenTriple { value: m.m[(0, 0)], right: one.clone(), left: one }]);
    }
    if scale == 0.0 {
        return Err(Error::DegenerateSpectrum(0.0));
    }
    let schur = Schur::try_new(m.m.clone(), f64::EPSILON, 1000 * n).ok_or(Error::NoConvergence)?;
    let (q, t) = schur.unpack();
    let values: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();

    let mut min_gap = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            min_gap = min_gap.min((values[i] - values[j]).norm() / scale);
        }
    }
    if min_gap <= DEGENERACY_TOL {
        return Err(Error::DegenerateSpectrum(min_gap));
    }

    // Back substitution on the triangular factor.
    let mut x = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        x[(k, k)] = ONE;
        for i in (0..k).rev() {
            let mut acc = ZERO;
            for j in i + 1..=k {
                acc += t[(i, j)] * x[(j, k)];
            }
            x[(i, k)] = -acc / (t[(i, i)] - values[k]);
        }
    }
    let mut right = &q * x;
    for k in 0..n {
        let col = StateVector { amps: right.column(k).into_owned() };
        let col = col.normalized()?.with_canonical_phase();
        right.set_column(k, col.amplitudes());
    }
    let inv = right.clone().try_inverse().ok_or(Error::Singular)?;

    let mut triples: Vec<EigenTriple> = (0..n)
        .map(|k| EigenTriple {
            value: values[k],
            right: StateVector { amps: right.column(k).into_owned() },
            left: StateVector { amps: inv.row(k).adjoint() },
        })
        .collect();
    let tol = 1e-12 * scale;
    triples.sort_by(|a, b| cmp_eigenvalues(a.value, b.value, tol));
    Ok(triples)
}

/// `Σ ω_i |r_i⟩⟨l_i| / ⟨l_i|r_i⟩`.
pub fn assemble(triples: &[EigenTriple]) -> Result<Operator> {
    let first = triples.first().ok_or(Error::Empty)?;
    let n = first.right.dim();
    let mut m = DMatrix::<C64>::zeros(n, n);
    for tr in triples {
        let norm = tr.left.inner(&tr.right)?;
        m += (tr.right.amplitudes() * tr.left.amplitudes().adjoint()).map(|z| z * tr.value / norm);
    }
    Operator::new(m)
}

/// 2-norm condition number of a square matrix of column vectors, from the
/// spectrum of its Gram matrix.
pub fn condition_number(cols: &DMatrix<C64>) -> f64 {
    let gram = Operator::from_matrix_unchecked(cols.adjoint() * cols);
    let Ok((values, _)) = hermitian_eig(&gram) else {
        return f64::INFINITY;
    };
    let (min, max) = (values[0], values[values.len() - 1]);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).sqrt()
    }
}
