//! Simulation of protective measurements of two-state vectors: weak values
//! of pre- and post-selected systems, non-Hermitian effective Hamiltonians
//! with their biorthogonal eigensystems, and exact joint evolution of a
//! qubit coupled to a pre- and post-selected large-spin device.

pub mod error;
pub mod hilbert;
pub mod kaon;
pub mod nonhermitian;
pub mod pointer;
pub mod protection;
pub mod propagate;

pub mod spin;
pub mod tsv;

pub use error::{Error, Result};
