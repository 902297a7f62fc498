//! Stabilizing flows for quasiextremal single-party marginals of fermionic and qubit
//! pure states, the (generalized) Pauli constraint machinery behind them, and the
//! energy bounds of facet-restricted variational ansatzes.
//!
//! Numerical types are generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! the common double-precision choices.

pub mod borland_dennis;
pub mod cli;
pub mod constraints;
pub mod dhat;
pub mod error;
pub mod flow;
pub mod fock;
pub mod marginal;
pub mod qubit;
pub mod scalar;
pub mod variational;

pub use constraints::{ConstraintSet, LinearConstraint, SystemKind};
pub use dhat::{DhatOperator, SelectionRule, ZeroProjector};
pub use error::{Error, Result};
pub use flow::{FermionSystem, FlowParams, FlowTrace, MarginalSystem, Termination};
pub use fock::{Basis, FockSetting, OccupationConfig, OrbitalRotation, StateVector};
pub use marginal::{NaturalSpectrum, OneRdm};
pub use qubit::{QubitState, QubitSystem};
pub use scalar::{CMatrix, CVector, Real, C};
pub use variational::{Hamiltonian, SpectralData, VariationalProblem};

pub type StateVectorF64 = StateVector<f64>;
pub type StateVectorF32 = StateVector<f32>;
pub type OrbitalRotationF64 = OrbitalRotation<f64>;
pub type OrbitalRotationF32 = OrbitalRotation<f32>;
pub type OneRdmF64 = OneRdm<f64>;
pub type DhatOperatorF64 = DhatOperator<f64>;
pub type FlowTraceF64 = FlowTrace<f64>;
pub type QubitStateF64 = QubitState<f64>;
pub type HamiltonianF64 = Hamiltonian<f64>;
pub type VariationalProblemF64 = VariationalProblem<f64>;
