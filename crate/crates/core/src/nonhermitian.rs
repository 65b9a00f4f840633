//! Non-Hermitian effective Hamiltonians and their biorthogonal eigensystems.
//!
//! Eigen-kets `|Φᵢ⟩` are unit vectors; eigen-bras `⟨Ψᵢ|` are the dual basis,
//! so `⟨Ψᵢ|Φⱼ⟩ = δᵢⱼ`. A state is expanded as `Σ αᵢ|Φᵢ⟩` with
//! `αᵢ = ⟨Ψᵢ|ψ⟩ / ⟨Ψᵢ|Φᵢ⟩`.
//!
//! Branch readings are `⟨Ψᵢ|A|Φᵢ⟩ / ⟨Ψᵢ|Φᵢ⟩`, bras on the left as in the
//! weak value of a two-state vector `⟨Ψᵢ| |Φᵢ⟩`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{assemble, condition_number, general_eig, EigenTriple, Operator, StateVector, C64, I, ZERO};
use crate::spin::{pauli, pauli_component, qubit_down, qubit_up, Direction};
use crate::tsv::{weak_value, TwoStateVector};

/// Eigenvalues with their eigen-kets and dual eigen-bras.
#[derive(Clone, Debug)]
pub struct BiorthogonalSystem {
    omegas: Vec<C64>,
    kets: Vec<StateVector>,
    bras: Vec<StateVector>,
    condition: f64,
}

impl BiorthogonalSystem {
    pub fn decompose(h: &Operator) -> Result<Self> {
        Ok(Self::from_triples(general_eig(h)?))
    }

    fn from_triples(triples: Vec<EigenTriple>) -> Self {
        let n = triples.len();
        let mut cols = DMatrix::zeros(n, n);
        for (k, t) in triples.iter().enumerate() {
            cols.set_column(k, t.right.amplitudes());
        }
        Self {
            omegas: triples.iter().map(|t| t.value).collect(),
            kets: triples.iter().map(|t| t.right.clone()).collect(),
            bras: triples.into_iter().map(|t| t.left).collect(),
            condition: condition_number(&cols),
        }
    }

    pub fn omegas(&self) -> &[C64] {
        &self.omegas
    }

    pub fn kets(&self) -> &[StateVector] {
        &self.kets
    }

    pub fn bras(&self) -> &[StateVector] {
        &self.bras
    }

    pub fn dim(&self) -> usize {
        self.omegas.len()
    }

    /// Condition number of the matrix of eigen-kets.
    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// Largest `|⟨Ψᵢ|Φⱼ⟩ - δᵢⱼ⟨Ψᵢ|Φᵢ⟩|`.
    pub fn biorthogonality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, b) in self.bras.iter().enumerate() {
            for (j, k) in self.kets.iter().enumerate() {
                if i != j {
                    worst = worst.max(b.inner(k).map(|z| z.norm()).unwrap_or(f64::INFINITY));
                }
            }
        }
        worst
    }

    /// `Σ ωᵢ |Φᵢ⟩⟨Ψᵢ| / ⟨Ψᵢ|Φᵢ⟩`.
    pub fn assemble(&self) -> Result<Operator> {
        let triples: Vec<EigenTriple> = (0..self.dim())
            .map(|i| EigenTriple { value: self.omegas[i], right: self.kets[i].clone(), left: self.bras[i].clone() })
            .collect();
        assemble(&triples)
    }

    /// Expansion coefficients `αᵢ` of `psi` in the eigen-kets.
    pub fn coefficients(&self, psi: &StateVector) -> Result<Vec<C64>> {
        self.bras
            .iter()
            .zip(&self.kets)
            .map(|(b, k)| Ok(b.inner(psi)? / b.inner(k)?))
            .collect()
    }

    /// `⟨Ψᵢ|A|Φᵢ⟩ / ⟨Ψᵢ|Φᵢ⟩`.
    pub fn pair_weak_value(&self, a: &Operator, i: usize) -> Result<C64> {
        let (b, k) = self.pair(i)?;
        Ok(a.sandwich(b, k)? / b.inner(k)?)
    }

    /// The `i`-th eigen-pair as a two-state vector `⟨Ψᵢ| |Φᵢ⟩`.
    pub fn pair_tsv(&self, i: usize) -> Result<TwoStateVector> {
        let (b, k) = self.pair(i)?;
        TwoStateVector::new(k, b)
    }

    fn pair(&self, i: usize) -> Result<(&StateVector, &StateVector)> {
        match (self.bras.get(i), self.kets.get(i)) {
            (Some(b), Some(k)) => Ok((b, k)),
            _ => Err(Error::InvalidParameter(format!("no eigen-pair {i}"))),
        }
    }

    /// First-order eigenvalues of `H + V`: `ωᵢ + ⟨Ψᵢ|V|Φᵢ⟩ / ⟨Ψᵢ|Φᵢ⟩`.
    pub fn first_order_eigenvalues(&self, v: &Operator) -> Result<Vec<C64>> {
        (0..self.dim()).map(|i| Ok(self.omegas[i] + self.pair_weak_value(v, i)?)).collect()
    }
}

/// State after norm-tracked non-unitary evolution.
#[derive(Clone, Debug)]
pub struct EvolutionResult {
    /// Normalized state.
    pub state: StateVector,
    /// `1 / ‖e^{-iHt}ψ₀‖`.
    pub norm_factor: f64,
    /// `αᵢ e^{-iωᵢt}` per eigen-pair.
    pub branch_amplitudes: Vec<C64>,
    log_weights: Vec<f64>,
}

impl EvolutionResult {
    /// `|αᵢ e^{-iωᵢt}|²`, normalized to sum 1.
    pub fn branch_probabilities(&self) -> Vec<f64> {
        normalized_weights(&self.log_weights)
    }
}

fn normalized_weights(logs: &[f64]) -> Vec<f64> {
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return vec![0.0; logs.len()];
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// `−λ (S_x σx + S_y σy + S_z σz)` with the device spin replaced by its
/// (generally complex) weak value.
pub fn effective_protector(lambda: f64, sw: [C64; 3]) -> Result<Operator> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
    }
    let mut m = DMatrix::from_element(2, 2, ZERO);
    for (s, sigma) in sw.iter().zip(pauli()) {
        m += sigma.matrix() * (s * -lambda);
    }
    Operator::new(m)
}

/// `H + (p/T)·σ_ξ` on a qubit.
pub fn add_measurement_term(h: &Operator, p: f64, t: f64, xi: &Direction) -> Result<Operator> {
    add_measurement_observable(h, p, t, &pauli_component(xi))
}

/// `H + (p/T)·A` for a general observable.
pub fn add_measurement_observable(h: &Operator, p: f64, t: f64, a: &Operator) -> Result<Operator> {
    if !(t > 0.0 && t.is_finite()) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!("need finite p and T > 0 (p = {p}, T = {t})")));
    }
    h.checked_add(&((p / t) * a))
}

/// First-order eigenvalues of `effective_protector(λ, (N, N, iN)) + (p/T)σ_ξ`:
/// `−λN + (p/T)(σ_ξ)_w` on `⟨↑ᵧ| |↑ₓ⟩` and `+λN + (p/T)(σ_ξ)_w` on `⟨↓ₓ| |↓ᵧ⟩`.
pub fn protector_first_order(lambda_n: f64, p_over_t: f64, xi: &Direction) -> Result<[C64; 2]> {
    let a = pauli_component(xi);
    let low = TwoStateVector::new(&qubit_up(&Direction::x()), &qubit_up(&Direction::y()))?;
    let high = TwoStateVector::new(&qubit_down(&Direction::y()), &qubit_down(&Direction::x()))?;
    Ok([
        C64::new(-lambda_n, 0.0) + weak_value(&a, &low)?.value * p_over_t,
        C64::new(lambda_n, 0.0) + weak_value(&a, &high)?.value * p_over_t,
    ])
}

/// The weak value `(N, N, iN)` of the device spin in `⟨S_y=N| |S_x=N⟩`.
pub fn stretched_device_weak_value(n: f64) -> [C64; 3] {
    [C64::new(n, 0.0), C64::new(n, 0.0), I * n]
}

const UNDERFLOW: f64 = 1e-300;

/// `e^{-iHt}ψ₀` through the biorthogonal expansion, renormalized.
pub fn evolve_nonhermitian(h: &Operator, psi0: &StateVector, t: f64) -> Result<EvolutionResult> {
    if !t.is_finite() {
        return Err(Error::NonFinite);
    }
    if h.dim() != psi0.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: psi0.dim() });
    }
    let sys = BiorthogonalSystem::decompose(h)?;
    evolve_in(&sys, psi0, t)
}

/// Evolution with a precomputed eigensystem.
pub fn evolve_in(sys: &BiorthogonalSystem, psi0: &StateVector, t: f64) -> Result<EvolutionResult> {
    let alphas = sys.coefficients(psi0)?;
    // Work with magnitudes shifted by the largest log-amplitude so that
    // strongly growing or decaying branches neither overflow nor vanish.
    let logs: Vec<f64> = alphas.iter().zip(&sys.omegas).map(|(a, w)| a.norm().ln() + w.im * t).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::UnderflowedBranch(0.0));
    }
    let n = psi0.dim();
    let mut acc = nalgebra::DVector::from_element(n, ZERO);
    let mut branch_amplitudes = Vec::with_capacity(alphas.len());
    for ((a, w), k) in alphas.iter().zip(&sys.omegas).zip(&sys.kets) {
        let phase = C64::from_polar(1.0, -w.re * t);
        let scaled = if a.norm() == 0.0 { ZERO } else { a / a.norm() * phase * (a.norm().ln() + w.im * t - top).exp() };
        acc += k.amplitudes() * scaled;
        branch_amplitudes.push(a * (C64::new(0.0, -t) * w).exp());
    }
    let shifted_norm = acc.norm();
    let log_norm = top + shifted_norm.ln();
    if log_norm.is_nan() || log_norm <= UNDERFLOW.ln() {
        return Err(Error::UnderflowedBranch(log_norm.exp()));
    }
    let norm_factor = (-log_norm).exp();
    if !(norm_factor > 0.0 && norm_factor.is_finite()) {
        return Err(Error::NonFinite);
    }
    let state = StateVector::from_vector(acc / C64::new(shifted_norm, 0.0))?;
    let log_weights = logs.iter().map(|l| 2.0 * l).collect();
    Ok(EvolutionResult { state, norm_factor, branch_amplitudes, log_weights })
}

/// Backward evolution of a bra `⟨φ|` under `H`: the ket `e^{-iH†t}|φ⟩`.
pub fn backward_evolve(h: &Operator, phi_target: &StateVector, t: f64) -> Result<EvolutionResult> {
    evolve_nonhermitian(&h.adjoint(), phi_target, t)
}

/// One outcome of an adiabatic measurement of `A` under a non-Hermitian
/// effective Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub reading: C64,
    pub probability: f64,
}

/// One branch per eigen-pair: reading `⟨Ψᵢ|A|Φᵢ⟩/⟨Ψᵢ|Φᵢ⟩`, probability
/// `∝ |αᵢ e^{-iωᵢT}|²` normalized over branches.
pub fn adiabatic_branches(h_eff: &Operator, a: &Operator, psi0: &StateVector, t: f64) -> Result<Vec<Branch>> {
    if a.dim() != h_eff.dim() {
        return Err(Error::DimensionMismatch { expected: h_eff.dim(), found: a.dim() });
    }
    let sys = BiorthogonalSystem::decompose(h_eff)?;
    let evolved = evolve_in(&sys, psi0, t)?;
    let probs = evolved.branch_probabilities();
    (0..sys.dim())
        .map(|i| Ok(Branch { reading: sys.pair_weak_value(a, i)?, probability: probs[i] }))
        .collect()
}
