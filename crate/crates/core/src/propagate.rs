//! Piecewise-constant evolution under `H0 + g(t)·p·V`, carrying the exact
//! derivative with respect to the pointer momentum `p` alongside the state.
//!
//! A stretch of equal coupling values is treated as one segment. Long
//! Hermitian segments go through an eigen-decomposition with divided
//! differences for the derivative; short ones through a Taylor series of the
//! block-triangular generator `(X, Y) -> (-iτHX, -iτ(HY + gVX))`.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{Operator, C64};

/// A stretch of constant coupling `g` lasting `duration`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub g: f64,
    pub duration: f64,
}

/// Merge consecutive identical coupling values of a uniform-step profile.
pub fn merge_profile(values: &[f64], dt: f64) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for &g in values {
        match out.last_mut() {
            Some(last) if last.g == g => last.duration += dt,
            _ => out.push(Segment { g, duration: dt }),
        }
    }
    out
}

/// States and their `p`-derivatives, one column per evolved vector.
#[derive(Clone, Debug)]
pub struct Evolved {
    pub states: DMatrix<C64>,
    pub derivatives: DMatrix<C64>,
}

/// Evolution under `H0 + g(t)·p·V` along a fixed coupling schedule.
#[derive(Clone, Debug)]
pub struct Propagator {
    h0: DMatrix<C64>,
    v: DMatrix<C64>,
    segments: Vec<Segment>,
    hermitian: bool,
}

fn one_norm(m: &DMatrix<C64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

impl Propagator {
    pub fn new(h0: &Operator, v: &Operator, segments: Vec<Segment>) -> Result<Self> {
        if h0.dim() != v.dim() {
            return Err(Error::DimensionMismatch { expected: h0.dim(), found: v.dim() });
        }
        if segments.iter().any(|s| !s.g.is_finite() || !s.duration.is_finite() || s.duration < 0.0) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            h0: h0.matrix().clone(),
            v: v.matrix().clone(),
            segments,
            hermitian: h0.is_hermitian() && v.is_hermitian(),
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Evolve the columns of `x`; derivatives start from zero.
    pub fn evolve(&self, p: f64, x: &DMatrix<C64>) -> Result<Evolved> {
        let y = DMatrix::zeros(x.nrows(), x.ncols());
        self.evolve_with(p, x, &y)
    }

    /// Evolve `x` together with a given derivative `y = ∂x/∂p`.
    pub fn evolve_with(&self, p: f64, x: &DMatrix<C64>, y: &DMatrix<C64>) -> Result<Evolved> {
        let n = self.dim();
        if x.nrows() != n || y.nrows() != n || y.ncols() != x.ncols() {
            return Err(Error::DimensionMismatch { expected: n, found: x.nrows() });
        }
        if !p.is_finite() {
            return Err(Error::NonFinite);
        }
        let mut x = x.clone();
        let mut y = y.clone();
        for seg in &self.segments {
            if seg.duration == 0.0 {
                continue;
            }
            let h = &self.h0 + &self.v * C64::new(seg.g * p, 0.0);
            let b = &self.v * C64::new(seg.g, 0.0);
            let substeps = self.taylor_substeps(&h, &b, seg.duration);
            if self.hermitian && self.prefer_eigen(substeps, x.ncols()) {
                eigen_step(&h, &b, seg.duration, &mut x, &mut y);
            } else {
                taylor_step(&h, &b, seg.duration, substeps, &mut x, &mut y);
            }
        }
        if x.iter().chain(y.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Evolved { states: x, derivatives: y })
    }

    fn taylor_substeps(&self, h: &DMatrix<C64>, b: &DMatrix<C64>, tau: f64) -> usize {
        (tau * (one_norm(h) + one_norm(b))).ceil().max(1.0) as usize
    }

    fn prefer_eigen(&self, substeps: usize, cols: usize) -> bool {
        let n = self.dim() as f64;
        let taylor = substeps as f64 * 20.0 * 4.0 * cols as f64 * n * n;
        let eigen = 30.0 * n * n * n + 8.0 * cols as f64 * n * n;
        eigen < taylor
    }
}

fn taylor_step(h: &DMatrix<C64>, b: &DMatrix<C64>, tau: f64, substeps: usize, x: &mut DMatrix<C64>, y: &mut DMatrix<C64>) {
    let step = C64::new(0.0, -tau / substeps as f64);
    let a_h = h * step;
    let a_b = b * step;
    for _ in 0..substeps {
        let mut tx = x.clone();
        let mut ty = y.clone();
        for k in 1..=60 {
            let inv = C64::new(1.0 / k as f64, 0.0);
            let nty = (&a_h * &ty + &a_b * &tx) * inv;
            let ntx = (&a_h * &tx) * inv;
            tx = ntx;
            ty = nty;
            *x += &tx;
            *y += &ty;
            let term = tx.norm() + ty.norm();
            if term <= f64::EPSILON * 1e-3 * (x.norm() + y.norm()) {
                break;
            }
        }
    }
}

/// `(e^{-iE_j τ} - e^{-iE_k τ}) / (E_j - E_k)`, the Fréchet kernel of `e^{-iHτ}`.
fn divided_difference(ej: f64, ek: f64, tau: f64) -> C64 {
    let delta = (ej - ek) * tau;
    let base = C64::from_polar(tau, -ek * tau);
    if delta.abs() < 1e-12 {
        base * C64::new(-delta / 2.0, -1.0)
    } else {
        let half = (delta / 2.0).sin();
        base * C64::new(-2.0 * half * half, -delta.sin()) / delta
    }
}

fn eigen_step(h: &DMatrix<C64>, b: &DMatrix<C64>, tau: f64, x: &mut DMatrix<C64>, y: &mut DMatrix<C64>) {
    let eig = SymmetricEigen::new(h.clone());
    let w = &eig.eigenvectors;
    let wa = w.adjoint();
    let e = &eig.eigenvalues;
    let n = e.len();
    let phases = DVector::from_iterator(n, e.iter().map(|&ek| C64::from_polar(1.0, -ek * tau)));
    let mut xt = &wa * &*x;
    let mut yt = &wa * &*y;
    let bt = &wa * b * w;
    let kernel = DMatrix::from_fn(n, n, |j, k| divided_difference(e[j], e[k], tau) * bt[(j, k)]);
    let extra = &kernel * &xt;
    for (r, ph) in phases.iter().enumerate() {
        for c in 0..xt.ncols() {
            xt[(r, c)] *= ph;
            yt[(r, c)] = yt[(r, c)] * ph + extra[(r, c)];
        }
    }
    *x = w * xt;
    *y = w * yt;
}

/// Plain `e^{-iHτ}` applied to columns, reusing one Hermitian decomposition.
pub(crate) fn hermitian_evolve(values: &[f64], vecs: &DMatrix<C64>, tau: f64, x: &DMatrix<C64>) -> DMatrix<C64> {
    let mut xt = vecs.adjoint() * x;
    for (r, &e) in values.iter().enumerate() {
        let ph = C64::from_polar(1.0, -e * tau);
        for c in 0..xt.ncols() {
            xt[(r, c)] *= ph;
        }
    }
    vecs * xt
}
