//! Von Neumann measuring devices with a Gaussian pointer.
//!
//! The pointer momentum `P` commutes with every coupling `g(t)·P·A`, so the
//! joint evolution splits into independent momentum sectors. Each sector is
//! evolved with its exact `p`-derivative `χ'`; pointer statistics follow from
//!
//! ```text
//! ⟨Q⟩ - q_mean = Re Σ w_p i χ†χ' / Σ w_p |χ|²
//! ```
//!
//! and the momentum shift from the conditional weights `w_p |χ|²`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{hermitian_eig, Operator, StateVector, C64, I, ZERO};
use crate::propagate::{merge_profile, Propagator};
use crate::tsv::TwoStateVector;

/// Coupling profile `g(t)` over the measurement window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    /// All of the coupling in the first time step.
    Impulsive,
    /// Raised-cosine ramps of `ramp_fraction·T` on each side of a flat top.
    FlatWithRamps { ramp_fraction: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::FlatWithRamps { ramp_fraction: 0.1 }
    }
}

impl Schedule {
    fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Impulsive => Ok(()),
            Schedule::FlatWithRamps { ramp_fraction } if (0.0..=0.5).contains(&ramp_fraction) => Ok(()),
            Schedule::FlatWithRamps { ramp_fraction } => {
                Err(Error::InvalidParameter(format!("ramp_fraction {ramp_fraction} outside [0, 0.5]")))
            }
        }
    }

    /// Coupling value on each of `steps` equal sub-intervals of `[0, duration]`,
    /// sampled at midpoints and scaled so that `Σ g·dt = 1` exactly.
    pub fn profile(&self, steps: usize, duration: f64) -> Result<Vec<f64>> {
        self.validate()?;
        if steps == 0 {
            return Err(Error::InvalidParameter("steps must be positive".into()));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration {duration} must be positive")));
        }
        let dt = duration / steps as f64;
        let shape: Vec<f64> = match *self {
            Schedule::Impulsive => (0..steps).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect(),
            Schedule::FlatWithRamps { ramp_fraction } => (0..steps)
                .map(|k| {
                    let s = (k as f64 + 0.5) / steps as f64;
                    let edge = s.min(1.0 - s);
                    if edge < ramp_fraction {
                        0.5 * (1.0 - (std::f64::consts::PI * edge / ramp_fraction).cos())
                    } else {
                        1.0
                    }
                })
                .collect(),
        };
        let area: f64 = shape.iter().sum::<f64>() * dt;
        Ok(shape.into_iter().map(|s| s / area).collect())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.reverse();
    out
}

/// A measuring device: Gaussian pointer, momentum grid, duration and schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct PointerModel {
    q_mean: f64,
    delta: f64,
    p_samples: Vec<(f64, f64)>,
    duration: f64,
    schedule: Schedule,
}

impl PointerModel {
    pub const DEFAULT_SAMPLES: usize = 33;

    /// Gaussian pointer of position spread `delta`: momentum spread
    /// `1/(2·delta)`, truncated at four standard deviations.
    pub fn gaussian(delta: f64, samples: usize) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta {delta} must be positive")));
        }
        if samples == 0 {
            return Err(Error::InvalidParameter("at least one momentum sample is required".into()));
        }
        let sigma = 1.0 / (2.0 * delta);
        let p_max = 4.0 * sigma;
        let raw: Vec<(f64, f64)> = gauss_legendre(samples)
            .into_iter()
            .map(|(x, w)| {
                let p = x * p_max;
                (p, w * (-p * p / (2.0 * sigma * sigma)).exp())
            })
            .collect();
        let total: f64 = raw.iter().map(|s| s.1).sum();
        let p_samples = raw.into_iter().map(|(p, w)| (p, w / total)).collect();
        Ok(Self { q_mean: 0.0, delta, p_samples, duration: 1.0, schedule: Schedule::default() })
    }

    /// Gaussian pointer whose truncated momentum support is `[-p_max, p_max]`.
    pub fn with_p_max(p_max: f64, samples: usize) -> Result<Self> {
        if !(p_max > 0.0 && p_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("p_max {p_max} must be positive")));
        }
        Self::gaussian(2.0 / p_max, samples)
    }

    /// Pointer with an explicit momentum grid.
    pub fn from_samples(q_mean: f64, delta: f64, p_samples: Vec<(f64, f64)>, duration: f64, schedule: Schedule) -> Result<Self> {
        if p_samples.is_empty() {
            return Err(Error::Empty);
        }
        if p_samples.iter().any(|&(p, w)| !p.is_finite() || !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidParameter("momentum samples must be finite with nonnegative weights".into()));
        }
        let total: f64 = p_samples.iter().map(|s| s.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("momentum weights sum to {total}")));
        }
        if !(delta > 0.0 && delta.is_finite()) || !q_mean.is_finite() {
            return Err(Error::InvalidParameter(format!("delta {delta} must be positive")));
        }
        Self { q_mean, delta, p_samples, duration: 1.0, schedule }.with_duration(duration)
    }

    pub fn with_duration(mut self, duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration {duration} must be positive")));
        }
        self.duration = duration;
        Ok(self)
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Result<Self> {
        schedule.validate()?;
        self.schedule = schedule;
        Ok(self)
    }

    pub fn with_q_mean(mut self, q_mean: f64) -> Self {
        self.q_mean = q_mean;
        self
    }

    pub fn q_mean(&self) -> f64 {
        self.q_mean
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn p_samples(&self) -> &[(f64, f64)] {
        &self.p_samples
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn p_max(&self) -> f64 {
        self.p_samples.iter().map(|s| s.0.abs()).fold(0.0, f64::max)
    }

    pub fn momentum_mean(&self) -> f64 {
        self.p_samples.iter().map(|&(p, w)| p * w).sum()
    }

    pub fn momentum_variance(&self) -> f64 {
        let m = self.momentum_mean();
        self.p_samples.iter().map(|&(p, w)| (p - m) * (p - m) * w).sum()
    }

    /// `g` on each time step, normalized to unit area.
    pub fn coupling_profile(&self, steps: usize) -> Result<Vec<f64>> {
        self.schedule.profile(steps, self.duration)
    }

    pub(crate) fn propagator(&self, h0: &Operator, coupling: &Operator, steps: usize) -> Result<Propagator> {
        let profile = self.coupling_profile(steps)?;
        Propagator::new(h0, coupling, merge_profile(&profile, self.duration / steps as f64))
    }
}

/// Pointer statistics after a measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    /// Mean pointer displacement.
    pub q_shift_mean: f64,
    /// Change of the mean pointer momentum, conditional on post-selection.
    pub p_shift_mean: f64,
    /// Gaussian mixture of the pointer position: (center, weight).
    pub outcome_distribution: Vec<(f64, f64)>,
    pub postselect_prob: f64,
    /// `q_shift_mean + i·(½ d ln|χ|²/dp averaged)`: the complex reading whose
    /// real part moves the position and imaginary part the momentum.
    pub complex_shift: C64,
    /// Average transition probability out of the initial state, when defined.
    pub leakage: Option<f64>,
    /// False when doubling the step count moved the reading by more than 1e-6.
    pub converged: bool,
}

/// Weighted sums over momentum sectors.
#[derive(Clone, Debug, Default)]
pub(crate) struct SectorSums {
    pub reading: C64,
    pub prob: f64,
    pub p_moment: f64,
}

impl SectorSums {
    pub fn add(&mut self, p: f64, w: f64, chi: &[C64], dchi: &[C64]) {
        let amp: f64 = chi.iter().map(|z| z.norm_sqr()).sum();
        let cross: C64 = chi.iter().zip(dchi).map(|(a, b)| a.conj() * b).sum();
        self.reading += I * cross * w;
        self.prob += w * amp;
        self.p_moment += w * amp * p;
    }

    /// `(complex_shift, postselect_prob, p_shift_mean)`.
    pub fn finish(&self, prior_mean: f64) -> Result<(C64, f64, f64)> {
        if !(self.prob.is_finite() && self.prob > 0.0) {
            return Err(Error::DeadBranch(self.prob));
        }
        Ok((self.reading / self.prob, self.prob, self.p_moment / self.prob - prior_mean))
    }
}

fn require_hermitian(a: &Operator) -> Result<()> {
    if a.is_hermitian() {
        Ok(())
    } else {
        Err(Error::NotHermitian(a.hermiticity_defect()))
    }
}

fn require_normalized(psi: &StateVector) -> Result<()> {
    if psi.is_normalized() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("state norm {} is not 1", psi.norm())))
    }
}

/// Strong, instantaneous measurement: a Gaussian mixture centred on the
/// eigenvalues of `a` with Born-rule weights.
pub fn impulsive_measure(a: &Operator, psi: &StateVector, ptr: &PointerModel) -> Result<MeasurementRecord> {
    require_hermitian(a)?;
    require_normalized(psi)?;
    if a.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: psi.dim() });
    }
    let (values, vecs) = hermitian_eig(a)?;
    let coeffs = vecs.adjoint() * psi.amplitudes();
    let mut components: Vec<(f64, f64)> = Vec::new();
    for (&v, c) in values.iter().zip(coeffs.iter()) {
        match components.last_mut() {
            Some(last) if (last.0 - v).abs() <= 1e-9 * (1.0 + v.abs()) => last.1 += c.norm_sqr(),
            _ => components.push((v, c.norm_sqr())),
        }
    }
    let mean: f64 = components.iter().map(|(v, w)| v * w).sum();
    Ok(MeasurementRecord {
        q_shift_mean: mean,
        p_shift_mean: 0.0,
        outcome_distribution: components.into_iter().map(|(v, w)| (ptr.q_mean + v, w)).collect(),
        postselect_prob: 1.0,
        complex_shift: C64::new(mean, 0.0),
        leakage: None,
        converged: true,
    })
}

fn single_outcome(ptr: &PointerModel, complex_shift: C64, prob: f64, p_shift: f64) -> MeasurementRecord {
    MeasurementRecord {
        q_shift_mean: complex_shift.re,
        p_shift_mean: p_shift,
        outcome_distribution: vec![(ptr.q_mean + complex_shift.re, 1.0)],
        postselect_prob: prob,
        complex_shift,
        leakage: None,
        converged: true,
    }
}

/// Impulsive coupling `e^{-i·strength·P·A}` followed by post-selection of the
/// system on the backward state of `tsv`.
pub fn weak_measure_tsv(a: &Operator, tsv: &TwoStateVector, ptr: &PointerModel, strength: f64) -> Result<MeasurementRecord> {
    require_hermitian(a)?;
    if a.dim() != tsv.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: tsv.dim() });
    }
    if !strength.is_finite() {
        return Err(Error::NonFinite);
    }
    let (values, vecs) = hermitian_eig(a)?;
    let fwd = vecs.adjoint() * tsv.forward().amplitudes();
    let bwd = vecs.adjoint() * tsv.backward().amplitudes();
    let weights: Vec<C64> = bwd.iter().zip(fwd.iter()).map(|(b, f)| b.conj() * f).collect();
    let mut sums = SectorSums::default();
    for &(p, w) in ptr.p_samples() {
        let mut chi = ZERO;
        let mut dchi = ZERO;
        for (&c, &v) in weights.iter().zip(&values) {
            let term = c * C64::from_polar(1.0, -strength * p * v);
            chi += term;
            dchi += term * C64::new(0.0, -strength * v);
        }
        sums.add(p, w, &[chi], &[dchi]);
    }
    let (shift, prob, p_shift) = sums.finish(ptr.momentum_mean())?;
    if strength == 0.0 {
        return Ok(single_outcome(ptr, ZERO, prob, 0.0));
    }
    Ok(single_outcome(ptr, shift, prob, p_shift))
}

fn eigenstate_energy(h0: &Operator, psi: &StateVector) -> Result<f64> {
    let e = h0.expectation(psi)?.re;
    let residual = (h0.apply(psi)?.amplitudes() - psi.amplitudes() * C64::new(e, 0.0)).norm();
    if residual > 1e-8 {
        return Err(Error::NotEigenstate(residual));
    }
    let (values, _) = hermitian_eig(h0)?;
    let scale = 1.0 + h0.max_abs_entry();
    let close = values.iter().filter(|&&v| (v - e).abs() <= 1e-8 * scale).count();
    if close > 1 {
        let gap = values.iter().filter(|&&v| v != e).map(|v| (v - e).abs()).fold(f64::INFINITY, f64::min);
        return Err(Error::DegenerateSpectrum(gap / scale));
    }
    Ok(e)
}

fn adiabatic_pass(a: &Operator, h0: &Operator, psi0: &StateVector, ptr: &PointerModel, steps: usize) -> Result<(C64, f64, f64)> {
    let prop = ptr.propagator(h0, a, steps)?;
    let x = DMatrix::from_column_slice(psi0.dim(), 1, psi0.as_slice());
    let mut sums = SectorSums::default();
    let mut leakage = 0.0;
    for &(p, w) in ptr.p_samples() {
        let out = prop.evolve(p, &x)?;
        let chi = out.states.column(0);
        let overlap: C64 = psi0.as_slice().iter().zip(chi.iter()).map(|(a, b)| a.conj() * b).sum();
        leakage += w * (1.0 - overlap.norm_sqr()).max(0.0);
        sums.add(p, w, chi.as_slice(), out.derivatives.column(0).as_slice());
    }
    let (shift, _, p_shift) = sums.finish(ptr.momentum_mean())?;
    Ok((shift, leakage, p_shift))
}

/// Protective measurement of a nondegenerate eigenstate of `h0` by slowly
/// switching on `g(t)·P·A` over the pointer's duration.
pub fn adiabatic_measure_single(a: &Operator, h0: &Operator, psi0: &StateVector, ptr: &PointerModel, steps: usize) -> Result<MeasurementRecord> {
    require_hermitian(a)?;
    require_hermitian(h0)?;
    require_normalized(psi0)?;
    for op in [a, h0] {
        if op.dim() != psi0.dim() {
            return Err(Error::DimensionMismatch { expected: op.dim(), found: psi0.dim() });
        }
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be positive".into()));
    }
    eigenstate_energy(h0, psi0)?;
    let (shift, leakage, p_shift) = adiabatic_pass(a, h0, psi0, ptr, steps)?;
    let (fine, _, _) = adiabatic_pass(a, h0, psi0, ptr, 2 * steps)?;
    let mut rec = single_outcome(ptr, shift, 1.0, p_shift);
    rec.leakage = Some(leakage);
    rec.converged = (fine - shift).norm() <= 1e-6;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::testutil::*;
    use crate::hilbert::{expm_apply, tensor, ONE};
    use crate::spin::{pauli, pauli_component, qubit_up, Direction};
    use crate::tsv::weak_value;
    use proptest::prelude::*;

    fn tsv_xy() -> TwoStateVector {
        TwoStateVector::new(&qubit_up(&Direction::x()), &qubit_up(&Direction::y())).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let nodes = gauss_legendre(7);
        for k in 0..14 {
            let got: f64 = nodes.iter().map(|(x, w)| w * x.powi(k)).sum();
            let want = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((got - want).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn gaussian_pointer_moments() {
        let ptr = PointerModel::gaussian(2.0, 33).unwrap();
        let w: f64 = ptr.p_samples().iter().map(|s| s.1).sum();
        assert!((w - 1.0).abs() < 1e-12);
        assert!((ptr.p_max() - 1.0).abs() < 0.01);
        assert!(ptr.momentum_mean().abs() < 1e-15);
        let sigma = 0.25;
        // Truncation at 4σ removes about 0.1% of the variance.
        assert!((ptr.momentum_variance() / (sigma * sigma) - 1.0).abs() < 3e-3);
        assert!(PointerModel::gaussian(0.0, 3).is_err());
        assert!(PointerModel::from_samples(0.0, 1.0, vec![(0.0, 0.5)], 1.0, Schedule::Impulsive).is_err());
    }

    #[test]
    fn profiles_have_unit_area() {
        for sched in [Schedule::Impulsive, Schedule::FlatWithRamps { ramp_fraction: 0.1 }, Schedule::FlatWithRamps { ramp_fraction: 0.0 }] {
            for steps in [1, 7, 200] {
                let g = sched.profile(steps, 3.0).unwrap();
                let area: f64 = g.iter().sum::<f64>() * 3.0 / steps as f64;
                assert!((area - 1.0).abs() < 1e-14);
            }
        }
        let g = Schedule::default().profile(100, 1.0).unwrap();
        assert!(g[0] < 0.1 && g[99] < 0.1);
        assert!(g[10..90].windows(2).all(|w| w[0] == w[1]));
        assert!(Schedule::FlatWithRamps { ramp_fraction: 0.7 }.profile(10, 1.0).is_err());
    }

    #[test]
    fn impulsive_eigenstate_single_component() {
        let ptr = PointerModel::gaussian(1.0, 9).unwrap().with_q_mean(2.0);
        let rec = impulsive_measure(&pauli()[2], &qubit_up(&Direction::z()), &ptr).unwrap();
        assert_eq!(rec.outcome_distribution.len(), 2);
        let dist: Vec<_> = rec.outcome_distribution.iter().filter(|c| c.1 > 1e-15).collect();
        assert_eq!(dist.len(), 1);
        assert!((dist[0].0 - 3.0).abs() < 1e-15 && (dist[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn impulsive_born_rule() {
        let ptr = PointerModel::gaussian(1.0, 9).unwrap();
        let rec = impulsive_measure(&pauli()[2], &qubit_up(&Direction::x()), &ptr).unwrap();
        assert!((rec.outcome_distribution[0].0 + 1.0).abs() < 1e-14);
        assert!((rec.outcome_distribution[0].1 - 0.5).abs() < 1e-14);
        assert!((rec.outcome_distribution[1].1 - 0.5).abs() < 1e-14);

        let xi = Direction::new(1.0, 0.0, 1.0).unwrap();
        let a = pauli_component(&xi);
        let psi = qubit_up(&Direction::x());
        let rec = impulsive_measure(&a, &psi, &ptr).unwrap();
        // Projector onto the +1 eigenspace is (I + A)/2.
        let proj = 0.5 * &(&Operator::identity(2) + &a);
        let p_up = proj.expectation(&psi).unwrap().re;
        assert!((rec.outcome_distribution[1].1 - p_up).abs() < 1e-14);
        let total: f64 = rec.outcome_distribution.iter().map(|c| c.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let not_hermitian = Operator::new(DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])).unwrap();
        assert!(matches!(impulsive_measure(&not_hermitian, &psi, &ptr), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn weak_sigma_z_moves_momentum_not_position() {
        let ptr = PointerModel::gaussian(10.0, 33).unwrap();
        let mut shifts = Vec::new();
        for s in [1e-2, 1e-3] {
            let rec = weak_measure_tsv(&pauli()[2], &tsv_xy(), &ptr, s).unwrap();
            assert!((rec.q_shift_mean / s).abs() < 1e-3);
            assert!(rec.p_shift_mean > 0.0);
            shifts.push(rec.p_shift_mean);
        }
        // Linear in strength.
        assert!((shifts[0] / shifts[1] - 10.0).abs() < 0.05);
    }

    #[test]
    fn weak_sigma_x_oracle() {
        let ptr = PointerModel::gaussian(10.0, 33).unwrap();
        let rec = weak_measure_tsv(&pauli()[0], &tsv_xy(), &ptr, 0.01).unwrap();
        assert!((rec.q_shift_mean - 0.01).abs() < 1e-4);
        assert!((rec.postselect_prob - 0.5).abs() < 1e-3);
    }

    #[test]
    fn weak_eigenstate_is_exact_for_any_strength() {
        let ptr = PointerModel::gaussian(0.5, 33).unwrap();
        let up = qubit_up(&Direction::z());
        let tsv = TwoStateVector::single(&up).unwrap();
        for s in [0.1, 1.0, 3.0] {
            let rec = weak_measure_tsv(&pauli()[2], &tsv, &ptr, s).unwrap();
            assert!((rec.q_shift_mean - s).abs() < 1e-12);
        }
        let rec = weak_measure_tsv(&pauli()[0], &tsv, &ptr, 0.0).unwrap();
        assert_eq!(rec.q_shift_mean, 0.0);
        assert_eq!(rec.p_shift_mean, 0.0);
    }

    #[test]
    fn weak_first_order_law() {
        let mut r = rng(21);
        let a = random_hermitian(&mut r, 3);
        let tsv = TwoStateVector::new(&random_state(&mut r, 3), &random_state(&mut r, 3)).unwrap();
        let aw = weak_value(&a, &tsv).unwrap().value;
        let ptr = PointerModel::gaussian(1.0, 33).unwrap();
        let errs: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&s| (weak_measure_tsv(&a, &tsv, &ptr, s).unwrap().q_shift_mean / s - aw.re).abs())
            .collect();
        let order = ((errs[0] / errs[2]).log10()) / 2.0;
        assert!(order >= 0.9, "errors {errs:?}");
    }

    // Full system ⊗ pointer evolution on the momentum grid, built without
    // the sector decomposition.
    #[test]
    fn momentum_sectors_reassemble_joint_evolution() {
        let mut r = rng(22);
        let h0 = random_hermitian(&mut r, 2);
        let a = random_hermitian(&mut r, 2);
        let ptr = PointerModel::gaussian(1.5, 8).unwrap().with_duration(2.0).unwrap();
        let steps = 20;
        let profile = ptr.coupling_profile(steps).unwrap();
        let dt = ptr.duration() / steps as f64;
        let psi = random_state(&mut r, 2);
        let amps: Vec<C64> = ptr.p_samples().iter().map(|s| C64::new(s.1.sqrt(), 0.0)).collect();
        let pointer = StateVector::new(amps).unwrap();
        let p_op = Operator::diagonal(&ptr.p_samples().iter().map(|s| C64::new(s.0, 0.0)).collect::<Vec<_>>()).unwrap();
        let mut joint = tensor(&psi, &pointer);
        let h0_joint = tensor(&h0, &Operator::identity(8));
        let coupling = tensor(&a, &p_op);
        for &g in &profile {
            joint = expm_apply(&(&h0_joint + &(g * &coupling)), dt, &joint).unwrap();
        }
        let prop = ptr.propagator(&h0, &a, steps).unwrap();
        let x = DMatrix::from_column_slice(2, 1, psi.as_slice());
        for (k, &(p, w)) in ptr.p_samples().iter().enumerate() {
            let out = prop.evolve(p, &x).unwrap();
            for s in 0..2 {
                let want = joint.as_slice()[s * 8 + k];
                assert!((out.states[(s, 0)] * w.sqrt() - want).norm() < 1e-10);
            }
        }
    }

    fn adiabatic_setup(t: f64, obs: usize) -> (Operator, Operator, StateVector, PointerModel) {
        let h0 = -10.0 * &pauli()[2];
        let ptr = PointerModel::with_p_max(0.5, 33).unwrap().with_duration(t).unwrap();
        (pauli()[obs].clone(), h0, qubit_up(&Direction::z()), ptr)
    }

    #[test]
    fn adiabatic_commuting_case_is_exact() {
        let (a, h0, psi, ptr) = adiabatic_setup(5.0, 2);
        let rec = adiabatic_measure_single(&a, &h0, &psi, &ptr, 50).unwrap();
        assert!((rec.q_shift_mean - 1.0).abs() < 1e-12);
        assert!(rec.leakage.unwrap() < 1e-14);
        assert!(rec.converged);
    }

    #[test]
    fn adiabatic_transverse_observable() {
        let (a, h0, psi, ptr) = adiabatic_setup(200.0, 0);
        let rec = adiabatic_measure_single(&a, &h0, &psi, &ptr, 2000).unwrap();
        assert!(rec.q_shift_mean.abs() < 1e-6, "{}", rec.q_shift_mean);
        assert!(rec.leakage.unwrap() < 1e-3);
        assert!(rec.converged);
    }

    #[test]
    fn adiabatic_leakage_shrinks_with_duration() {
        let leak: Vec<f64> = [25.0, 50.0, 100.0, 200.0]
            .iter()
            .map(|&t| {
                let (a, h0, psi, ptr) = adiabatic_setup(t, 0);
                adiabatic_measure_single(&a, &h0, &psi, &ptr, (t * 10.0) as usize).unwrap().leakage.unwrap()
            })
            .collect();
        // Once below the rounding floor the ladder carries no information.
        for w in leak.windows(2) {
            assert!(w[1] <= w[0] || w[1] < 1e-12, "{leak:?}");
        }
        assert!(leak[0] > leak[3]);
    }

    #[test]
    fn adiabatic_rejects_non_eigenstate_and_flags_coarse_steps() {
        let (a, h0, _, ptr) = adiabatic_setup(50.0, 0);
        let psi = qubit_up(&Direction::x());
        assert!(matches!(adiabatic_measure_single(&a, &h0, &psi, &ptr, 100), Err(Error::NotEigenstate(_))));
        let (a, h0, psi, ptr) = adiabatic_setup(1.0, 0);
        let rough = PointerModel::with_p_max(40.0, 9).unwrap();
        let a_mixed = &a + &pauli()[2];
        let rec = adiabatic_measure_single(&a_mixed, &h0, &psi, &rough, 3).unwrap();
        assert!(!rec.converged);
        let degenerate = Operator::identity(2);
        assert!(matches!(adiabatic_measure_single(&a, &degenerate, &psi, &ptr, 10), Err(Error::DegenerateSpectrum(_))));
    }

    proptest! {
        #[test]
        fn impulsive_weights_sum_to_one(seed in 0u64..1000) {
            let mut r = rng(seed);
            let a = random_hermitian(&mut r, 4);
            let psi = random_state(&mut r, 4);
            let rec = impulsive_measure(&a, &psi, &PointerModel::gaussian(1.0, 3).unwrap()).unwrap();
            let total: f64 = rec.outcome_distribution.iter().map(|c| c.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(rec.outcome_distribution.iter().all(|c| (0.0..=1.0 + 1e-12).contains(&c.1)));
        }
    }
}
