//! Two-state vectors `⟨Ψ₂| |Ψ₁⟩`, weak values and post-selection statistics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{hermitian_eig, Operator, StateVector, C64, ONE};
use crate::spin::{pauli, SpinSystem};

/// Default cutoff on `|⟨Ψ₂|Ψ₁⟩|` below which a pair counts as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Tolerance on the qubit consistency condition `wx² + wy² + wz² = 1`.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

/// A pre-selected state `|Ψ₁⟩` paired with a post-selected state `|Ψ₂⟩`.
///
/// The backward state is stored as a ket; it enters formulas conjugated.
#[derive(Clone, Debug)]
pub struct TwoStateVector {
    forward: StateVector,
    backward: StateVector,
    overlap: C64,
}

impl TwoStateVector {
    /// Normalizes both states and rejects near-orthogonal pairs.
    pub fn new(forward: &StateVector, backward: &StateVector) -> Result<Self> {
        let forward = forward.normalized()?;
        let backward = backward.normalized()?;
        let overlap = backward.inner(&forward)?;
        if overlap.norm() <= ORTHOGONALITY_TOL {
            return Err(Error::NearOrthogonal(overlap.norm()));
        }
        Ok(Self { forward, backward, overlap })
    }

    /// The description of a system that was only pre-selected: `⟨ψ| |ψ⟩`.
    pub fn single(state: &StateVector) -> Result<Self> {
        Self::new(state, state)
    }

    pub fn forward(&self) -> &StateVector {
        &self.forward
    }

    pub fn backward(&self) -> &StateVector {
        &self.backward
    }

    /// `⟨Ψ₂|Ψ₁⟩`.
    pub fn overlap(&self) -> C64 {
        self.overlap
    }

    pub fn dim(&self) -> usize {
        self.forward.dim()
    }

    /// Fidelities of the forward and backward states against `other`'s.
    pub fn fidelities(&self, other: &TwoStateVector) -> Result<(f64, f64)> {
        Ok((self.forward.fidelity(&other.forward)?, self.backward.fidelity(&other.backward)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakValue {
    pub value: C64,
    pub observable_label: String,
}

impl WeakValue {
    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.observable_label = label.into();
        self
    }
}

/// `A_w = ⟨Ψ₂|A|Ψ₁⟩ / ⟨Ψ₂|Ψ₁⟩`.
pub fn weak_value(a: &Operator, tsv: &TwoStateVector) -> Result<WeakValue> {
    let overlap = tsv.overlap();
    if overlap.norm() <= ORTHOGONALITY_TOL {
        return Err(Error::NearOrthogonal(overlap.norm()));
    }
    let value = a.sandwich(tsv.backward(), tsv.forward())? / overlap;
    Ok(WeakValue { value, observable_label: String::new() })
}

/// Weak values of `(S_x, S_y, S_z)`.
pub fn weak_value_vector(sys: &SpinSystem, tsv: &TwoStateVector) -> Result<[C64; 3]> {
    let [sx, sy, sz] = sys.components();
    Ok([weak_value(sx, tsv)?.value, weak_value(sy, tsv)?.value, weak_value(sz, tsv)?.value])
}

/// Weak values of the Pauli matrices for a qubit two-state vector.
pub fn pauli_weak_values(tsv: &TwoStateVector) -> Result<[C64; 3]> {
    let [sx, sy, sz] = pauli();
    Ok([weak_value(&sx, tsv)?.value, weak_value(&sy, tsv)?.value, weak_value(&sz, tsv)?.value])
}

/// Born-rule probability `|⟨target|evolved⟩|²`, clamped to `[0, 1]`.
pub fn postselect_probability(target: &StateVector, evolved: &StateVector) -> Result<f64> {
    Ok(target.inner(evolved)?.norm_sqr().clamp(0.0, 1.0))
}

/// The qubit two-state vector whose Pauli weak values are `(wx, wy, wz)`.
///
/// The weak values fix the trace-one rank-one operator
/// `|Ψ₁⟩⟨Ψ₂| / ⟨Ψ₂|Ψ₁⟩ = (I + w·σ) / 2`, which exists iff
/// `wx² + wy² + wz² = 1` (complex square, not modulus). Its column space
/// is the forward state and its row space the backward state.
pub fn reconstruct_qubit_tsv(wx: C64, wy: C64, wz: C64) -> Result<TwoStateVector> {
    let residual = consistency_residual([wx, wy, wz]);
    if residual > RECONSTRUCTION_TOL {
        return Err(Error::NoSolution(residual));
    }
    let (tsv, _) = nearest_qubit_tsv([wx, wy, wz])?;
    let got = pauli_weak_values(&tsv)?;
    let mismatch = got.iter().zip([wx, wy, wz]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    if mismatch > RECONSTRUCTION_TOL {
        return Err(Error::NoSolution(mismatch));
    }
    Ok(tsv)
}

/// `|wx² + wy² + wz² - 1|`.
pub fn consistency_residual(w: [C64; 3]) -> f64 {
    (w.iter().map(|z| z * z).sum::<C64>() - ONE).norm()
}

/// Best rank-one fit of `(I + w·σ)/2` for weak values carrying measurement
/// noise. Returns the two-state vector and the consistency residual.
pub fn nearest_qubit_tsv(w: [C64; 3]) -> Result<(TwoStateVector, f64)> {
    let [sx, sy, sz] = pauli();
    let half = C64::new(0.5, 0.0);
    let rho: DMatrix<C64> = (DMatrix::identity(2, 2)
        + sx.matrix().map(|z| z * w[0])
        + sy.matrix().map(|z| z * w[1])
        + sz.matrix().map(|z| z * w[2]))
    .map(|z| z * half);
    // Top left/right singular vectors from the Gram matrices.
    let top = |gram: DMatrix<C64>| -> Result<StateVector> {
        let (_, vecs) = hermitian_eig(&Operator::new(gram)?)?;
        StateVector::from_vector(vecs.column(1).into_owned())
    };
    let forward = top(&rho * rho.adjoint())?;
    let backward = top(rho.adjoint() * &rho)?;
    Ok((TwoStateVector::new(&forward, &backward)?, consistency_residual(w)))
}
