//! Simulator for weak light transmitted and reflected by arrays of
//! harmonically trapped two-level atoms.
//!
//! The atoms' motion is resolved quantum-mechanically: the master equation
//! runs on the electronic ⊗ vibrational product space, with every
//! position-dependent operator (drive phases, dipole-dipole kernels,
//! transmission operators) evaluated through a discrete-variable
//! representation of the position operator. A sudden-approximation pipeline
//! (fixed atoms, Gaussian position averaging) provides the fast classical
//! counterpart the full quantum results are compared against.
//!
//! Internal units: Γ = 1, k₀ = 1, ħ = 1. All SI conversion happens at the
//! boundary (see the companion CLI crate).
//!
//! The numerics are generic over the floating-point type via
//! [`scalar::Scalar`]; the aliases below fix the default `f64`
//! instantiations.

pub mod dvr;
pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod scalar;
pub mod spatial;
pub mod steadystate;

pub use error::{Error, Result};

/// Default double-precision instantiations.
pub type SparseOperator64 = hilbert::SparseOperator<f64>;
pub type DensityMatrix64 = hilbert::DensityMatrix<f64>;
pub type DvrGrid64 = dvr::DvrGrid<f64>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type LindbladModel64 = model::LindbladModel<f64>;
pub type SolverConfig64 = steadystate::SolverConfig<f64>;
pub type Spectrum64 = observables::Spectrum<f64>;
pub type QuadratureRule64 = spatial::QuadratureRule<f64>;

/// Single-precision variants for quick smoke runs; the documented tolerances
/// assume `f64`.
pub type SparseOperator32 = hilbert::SparseOperator<f32>;
pub type DensityMatrix32 = hilbert::DensityMatrix<f32>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type LindbladModel32 = model::LindbladModel<f32>;
