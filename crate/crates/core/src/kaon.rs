//! A decaying two-level system with CP violation: the neutral kaon
//! effective Hamiltonian in the `(|K⁰⟩, |K̄⁰⟩)` basis.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{general_eig, Operator, StateVector, C64};
use crate::nonhermitian::{evolve_nonhermitian, EvolutionResult};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KaonParams {
    pub m_l: f64,
    pub m_s: f64,
    pub gamma_l: f64,
    pub gamma_s: f64,
    pub epsilon: C64,
}

impl Default for KaonParams {
    fn default() -> Self {
        Self { m_l: 0.0, m_s: 0.0, gamma_l: 0.002, gamma_s: 1.0, epsilon: C64::new(0.002, 0.0) }
    }
}

impl KaonParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.m_l, self.m_s, self.gamma_l, self.gamma_s, self.epsilon.re, self.epsilon.im].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite);
        }
        if !(self.gamma_s > self.gamma_l && self.gamma_l > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need gamma_s > gamma_l > 0 (gamma_s = {}, gamma_l = {})",
                self.gamma_s, self.gamma_l
            )));
        }
        if self.epsilon.norm() >= 0.1 {
            return Err(Error::InvalidParameter(format!("|epsilon| = {} must be below 0.1", self.epsilon.norm())));
        }
        Ok(())
    }

    /// `|K_L⟩ ∝ (1+ε)|K⁰⟩ + (1−ε)|K̄⁰⟩`.
    pub fn long_state(&self) -> StateVector {
        self.mixed(1.0)
    }

    /// `|K_S⟩ ∝ (1+ε)|K⁰⟩ − (1−ε)|K̄⁰⟩`.
    pub fn short_state(&self) -> StateVector {
        self.mixed(-1.0)
    }

    fn mixed(&self, sign: f64) -> StateVector {
        let one = C64::new(1.0, 0.0);
        StateVector::new(vec![one + self.epsilon, (one - self.epsilon) * sign])
            .and_then(|s| s.normalized())
            .expect("|epsilon| < 0.1 keeps the state finite and nonzero")
    }

    pub fn long_eigenvalue(&self) -> C64 {
        C64::new(self.m_l, -self.gamma_l / 2.0)
    }

    pub fn short_eigenvalue(&self) -> C64 {
        C64::new(self.m_s, -self.gamma_s / 2.0)
    }
}

/// `Σ ωᵢ |Kᵢ⟩⟨K'ᵢ|` with the dual bras of `|K_L⟩, |K_S⟩`.
pub fn kaon_hamiltonian(params: &KaonParams) -> Result<Operator> {
    params.validate()?;
    let (l, s) = (params.long_state(), params.short_state());
    let v = DMatrix::from_columns(&[l.amplitudes().clone(), s.amplitudes().clone()]);
    let inv = v.clone().try_inverse().ok_or(Error::Singular)?;
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![params.long_eigenvalue(), params.short_eigenvalue()]));
    Operator::new(v * d * inv)
}

/// Both sides of `|⟨K'|K⟩| = 1/√(1 − |⟨K_S|K_L⟩|²)` for each eigen-pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KaonOverlap {
    /// `|⟨K_S|K_L⟩|` of the unit eigen-kets.
    pub mixing: f64,
    /// `1/|⟨K̂'_S|K̂_S⟩|` with unit bra and ket, i.e. the norm of the dual bra.
    pub forward_backward_short: f64,
    pub forward_backward_long: f64,
    /// `1/√(1 − mixing²)`.
    pub predicted: f64,
    /// `|⟨K̂'_S|K̂_S⟩|` itself, which equals `√(1 − mixing²)`.
    pub unit_overlap_short: f64,
}

/// Evaluate the overlap relation from the numerical eigen-decomposition.
pub fn kaon_overlap_check(params: &KaonParams) -> Result<KaonOverlap> {
    let h = kaon_hamiltonian(params)?;
    let triples = general_eig(&h)?;
    // The short-lived state decays faster.
    let (short, long) = if triples[0].value.im < triples[1].value.im { (&triples[0], &triples[1]) } else { (&triples[1], &triples[0]) };
    let mixing = short.right.inner(&long.right)?.norm();
    let unit = |t: &crate::hilbert::EigenTriple| -> Result<f64> { Ok(t.left.normalized()?.inner(&t.right.normalized()?)?.norm()) };
    let unit_short = unit(short)?;
    let unit_long = unit(long)?;
    Ok(KaonOverlap {
        mixing,
        forward_backward_short: 1.0 / unit_short,
        forward_backward_long: 1.0 / unit_long,
        predicted: 1.0 / (1.0 - mixing * mixing).sqrt(),
        unit_overlap_short: unit_short,
    })
}

/// Evolution conditioned on no decay up to `t`; the norm factor carries the
/// inverse survival amplitude.
pub fn survival_postselected_run(params: &KaonParams, psi0: &StateVector, t: f64) -> Result<EvolutionResult> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidParameter(format!("time {t} must be nonnegative")));
    }
    evolve_nonhermitian(&kaon_hamiltonian(params)?, psi0, t)
}

/// Index of the long-lived branch in an evolution of the kaon Hamiltonian.
pub fn long_branch_index(params: &KaonParams) -> Result<usize> {
    let triples = general_eig(&kaon_hamiltonian(params)?)?;
    Ok(if triples[0].value.im > triples[1].value.im { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::testutil::rng;
    use rand::Rng;

    fn with_epsilon(eps: C64) -> KaonParams {
        KaonParams { epsilon: eps, ..KaonParams::default() }
    }

    #[test]
    fn cp_conserving_limit() {
        let p = with_epsilon(C64::new(0.0, 0.0));
        assert_eq!(p.short_state().inner(&p.long_state()).unwrap().norm(), 0.0);
        let check = kaon_overlap_check(&p).unwrap();
        assert!(check.mixing < 1e-15);
        assert!((check.forward_backward_short - 1.0).abs() < 1e-12);
        assert!((check.predicted - 1.0).abs() < 1e-15);
        // Normal: Hermitian mass part plus commuting decay.
        let h = kaon_hamiltonian(&p).unwrap();
        let comm = h.matrix() * h.matrix().adjoint() - h.matrix().adjoint() * h.matrix();
        assert!(comm.norm() < 1e-14);
    }

    #[test]
    fn mixing_for_real_epsilon() {
        let eps = 0.002;
        let p = with_epsilon(C64::new(eps, 0.0));
        let direct = p.short_state().inner(&p.long_state()).unwrap().norm();
        assert!((direct - 2.0 * eps / (1.0 + eps * eps)).abs() < 1e-15);
        let check = kaon_overlap_check(&p).unwrap();
        assert!((check.mixing - direct).abs() < 1e-12);
        assert!((check.forward_backward_short - check.predicted).abs() < 1e-10);
        assert!((check.forward_backward_long - check.predicted).abs() < 1e-10);
        assert!((check.unit_overlap_short - (1.0 - direct * direct).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_carry_decay_widths() {
        let p = KaonParams { m_l: 0.3, m_s: -0.2, ..KaonParams::default() };
        let triples = general_eig(&kaon_hamiltonian(&p).unwrap()).unwrap();
        let values: Vec<C64> = triples.iter().map(|t| t.value).collect();
        assert!(values.iter().any(|v| (v - p.short_eigenvalue()).norm() < 1e-14));
        assert!(values.iter().any(|v| (v - p.long_eigenvalue()).norm() < 1e-14));
    }

    #[test]
    fn overlap_relation_sweep() {
        let mut r = rng(51);
        for _ in 0..200 {
            let eps = C64::from_polar(r.random_range(0.0..0.099), r.random_range(0.0..std::f64::consts::TAU));
            let gamma_l = r.random_range(1e-4..0.5);
            let p = KaonParams { m_l: r.random_range(-1.0..1.0), m_s: r.random_range(-1.0..1.0), gamma_l, gamma_s: gamma_l + r.random_range(0.01..2.0), epsilon: eps };
            let check = kaon_overlap_check(&p).unwrap();
            assert!((check.forward_backward_short - check.predicted).abs() < 1e-9);
            assert!((check.forward_backward_long - check.predicted).abs() < 1e-9);
        }
    }

    #[test]
    fn mixing_is_linear_in_epsilon() {
        let phase = C64::from_polar(1.0, 0.7);
        let mix = |e: f64| with_epsilon(phase * e).short_state().inner(&with_epsilon(phase * e).long_state()).unwrap().norm();
        let h = 1e-6;
        let slope0 = (mix(h) - mix(0.0)) / h;
        let es = [0.001, 0.002, 0.005, 0.01];
        let fit = es.iter().zip(es.iter().map(|&e| mix(e))).map(|(e, m)| e * m).sum::<f64>() / es.iter().map(|e| e * e).sum::<f64>();
        assert!((fit / slope0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn long_state_decays_as_single_exponential() {
        let p = KaonParams::default();
        let t = 37.0;
        let out = survival_postselected_run(&p, &p.long_state(), t).unwrap();
        assert!((out.norm_factor - (p.gamma_l * t / 2.0).exp()).abs() < 1e-10);
        let probs = out.branch_probabilities();
        assert!(probs[long_branch_index(&p).unwrap()] > 1.0 - 1e-12);
    }

    #[test]
    fn neutral_kaon_becomes_long_lived() {
        let p = KaonParams::default();
        let k0 = StateVector::basis(2, 0).unwrap();
        let out = survival_postselected_run(&p, &k0, 10.0 / p.gamma_s).unwrap();
        assert!(out.branch_probabilities()[long_branch_index(&p).unwrap()] > 0.99);
        assert!(out.state.fidelity(&p.long_state()).unwrap() > 0.99);
        let still = survival_postselected_run(&p, &k0, 0.0).unwrap();
        assert!((still.state.amplitudes() - k0.amplitudes()).norm() < 1e-14);
        assert!(survival_postselected_run(&p, &k0, -1.0).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(kaon_hamiltonian(&KaonParams { gamma_l: 2.0, ..KaonParams::default() }).is_err());
        assert!(kaon_hamiltonian(&with_epsilon(C64::new(0.2, 0.0))).is_err());
    }
}
