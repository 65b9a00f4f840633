//! Spin-j representations in the `S_z` eigenbasis, ordered `m = j, j-1, …, -j`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{hermitian_eig, Operator, StateVector, C64, I, ONE, ZERO};

/// A unit 3-vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction([f64; 3]);

impl Direction {
    /// Normalizes `(x, y, z)`; rejects zero and non-finite input.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::InvalidDirection(format!("[{x}, {y}, {z}]")));
        }
        Ok(Self([x / n, y / n, z / n]))
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match v {
            [x, y, z] => Self::new(*x, *y, *z),
            _ => Err(Error::InvalidDirection(format!("expected 3 components, got {}", v.len()))),
        }
    }

    /// Polar angle `theta` from `+z`, azimuth `phi` from `+x`.
    pub fn from_spherical(theta: f64, phi: f64) -> Result<Self> {
        Self::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
    }

    pub const fn x() -> Self {
        Self([1.0, 0.0, 0.0])
    }

    pub const fn y() -> Self {
        Self([0.0, 1.0, 0.0])
    }

    pub const fn z() -> Self {
        Self([0.0, 0.0, 1.0])
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn flipped(&self) -> Self {
        Self([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// Converts a spin quantum number to `2j`, rejecting non half-integers.
pub fn twice_spin(j: f64) -> Result<u32> {
    let twice = 2.0 * j;
    if !twice.is_finite() || twice < -1e-12 || (twice - twice.round()).abs() > 1e-12 {
        return Err(Error::InvalidSpin(twice));
    }
    Ok(twice.round() as u32)
}

/// Angular-momentum triple `(S_x, S_y, S_z)` for spin `j` (ħ = 1).
#[derive(Clone, Debug)]
pub struct SpinSystem {
    twice_j: u32,
    ops: [Operator; 3],
}

impl SpinSystem {
    pub fn from_twice_j(twice_j: u32) -> Self {
        let dim = twice_j as usize + 1;
        let j = twice_j as f64 / 2.0;
        let m = |k: usize| j - k as f64;
        let mut raise = DMatrix::<C64>::zeros(dim, dim);
        for k in 1..dim {
            raise[(k - 1, k)] = C64::new((j * (j + 1.0) - m(k) * (m(k) + 1.0)).sqrt(), 0.0);
        }
        let lower = raise.adjoint();
        let sx = (&raise + &lower).map(|z| z * 0.5);
        let sy = (&raise - &lower).map(|z| z * C64::new(0.0, -0.5));
        let sz = DMatrix::from_fn(dim, dim, |a, b| if a == b { C64::new(m(a), 0.0) } else { ZERO });
        Self {
            twice_j,
            ops: [
                Operator::from_matrix_unchecked(sx),
                Operator::from_matrix_unchecked(sy),
                Operator::from_matrix_unchecked(sz),
            ],
        }
    }

    pub fn j(&self) -> f64 {
        self.twice_j as f64 / 2.0
    }

    pub fn twice_j(&self) -> u32 {
        self.twice_j
    }

    pub fn dim(&self) -> usize {
        self.twice_j as usize + 1
    }

    pub fn sx(&self) -> &Operator {
        &self.ops[0]
    }

    pub fn sy(&self) -> &Operator {
        &self.ops[1]
    }

    pub fn sz(&self) -> &Operator {
        &self.ops[2]
    }

    pub fn components(&self) -> &[Operator; 3] {
        &self.ops
    }

    /// `S² = Sx² + Sy² + Sz²`.
    pub fn casimir(&self) -> Operator {
        self.ops.iter().fold(Operator::zeros(self.dim()), |acc, s| &acc + &(s * s))
    }

    /// `n · S`.
    pub fn component(&self, n: &Direction) -> Operator {
        spin_component(self, n)
    }

    /// `|S_n = j⟩`.
    pub fn coherent(&self, n: &Direction) -> StateVector {
        let (_, vecs) = hermitian_eig(&self.component(n)).expect("spin components are Hermitian");
        let top = vecs.ncols() - 1;
        StateVector::from_vector(vecs.column(top).into_owned()).expect("finite eigenvector")
    }
}

pub fn make_spin(j: f64) -> Result<SpinSystem> {
    Ok(SpinSystem::from_twice_j(twice_spin(j)?))
}

/// Maximal-weight eigenstate of `n · S`, with eigenvalue `+j`.
pub fn coherent(j: f64, n: &Direction) -> Result<StateVector> {
    Ok(make_spin(j)?.coherent(n))
}

pub fn spin_component(sys: &SpinSystem, n: &Direction) -> Operator {
    let [nx, ny, nz] = n.components();
    let m = sys.ops[0].matrix().map(|z| z * nx) + sys.ops[1].matrix().map(|z| z * ny) + sys.ops[2].matrix().map(|z| z * nz);
    Operator::from_matrix_unchecked(m)
}

/// Pauli matrices `(σx, σy, σz)`.
pub fn pauli() -> [Operator; 3] {
    [
        Operator::from_matrix_unchecked(DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])),
        Operator::from_matrix_unchecked(DMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])),
        Operator::from_matrix_unchecked(DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])),
    ]
}

/// `n · σ`.
pub fn pauli_component(n: &Direction) -> Operator {
    spin_component(&SpinSystem::from_twice_j(1), n).scaled(C64::new(2.0, 0.0))
}

/// `|↑_n⟩` for a spin-1/2.
pub fn qubit_up(n: &Direction) -> StateVector {
    SpinSystem::from_twice_j(1).coherent(n)
}

/// `|↓_n⟩ = |↑_{-n}⟩` for a spin-1/2.
pub fn qubit_down(n: &Direction) -> StateVector {
    qubit_up(&n.flipped())
}
