//! Simulation of a dressed-state entangling phase gate for two trapped ions
//! sharing one motional mode.
//!
//! Tensor factor order is fixed everywhere: (ion 1 spin) ⊗ (ion 2 spin) ⊗ (motion),
//! with `|↑⟩ = 0`, `|↓⟩ = 1`. Hamiltonians are `H/ħ` in rad/s and time is in seconds.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod hamiltonian;
pub mod integrate;
pub mod linalg;
pub mod measurement;
pub mod noise;
pub mod scalar;
pub mod sequence;
pub mod space;
pub mod state;

pub use error::{GateError, Result};
pub use scalar::{Real, C};

/// Double-precision aliases (the default everywhere).
pub type State = state::CompositeState<f64>;
pub type Params = space::GateParams<f64>;
pub type Hamiltonian = hamiltonian::GateHamiltonian<f64>;
pub type Drive = hamiltonian::DriveSnapshot<f64>;
pub type Operator = linalg::SparseOp<f64>;
pub type Matrix = linalg::DenseMatrix<f64>;

/// Single-precision aliases for quick exploratory runs.
pub type State32 = state::CompositeState<f32>;
pub type Params32 = space::GateParams<f32>;
pub type Hamiltonian32 = hamiltonian::GateHamiltonian<f32>;
pub type Drive32 = hamiltonian::DriveSnapshot<f32>;
pub type Operator32 = linalg::SparseOp<f32>;
pub type Matrix32 = linalg::DenseMatrix<f32>;
