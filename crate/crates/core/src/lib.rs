//! Exact dynamics of multipartite systems whose subsystems are coupled
//! through non-diagonal dephasing.
//!
//! The generator is diagonal in the product eigenbasis of commuting
//! subsystem operators, so every density-matrix entry evolves as
//! `exp(-Φ t)`. On top of that closed form the crate provides reduced
//! system and bath dynamics for a system/bath split, canonical rates of the
//! reduced coherences, the operational three-time measurement statistics,
//! entanglement-generation criteria, and an independent Runge-Kutta
//! integrator used as a cross-check.
//!
//! All numerical code is generic over [`scalar::Real`]; the aliases below fix
//! the scalar to `f64`.

// `!(x <= tol)` is how validation rejects NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod basis;
pub mod entangle;
pub mod error;
pub mod exact;
pub mod linalg;
pub mod model;
pub mod operational;
pub mod oracle;
pub mod scalar;
pub mod split;
pub mod verify;
pub mod witness;

pub use basis::{MultiIndex, ProductBasis};
pub use error::{Error, Result};
pub use split::SplitSpec;

pub type Model = model::ModelSpec<f64>;
pub type GeneralizedModel = model::GeneralizedModelSpec<f64>;
pub type RingParams = model::RingCouplingParams<f64>;
pub type State = exact::DensityMatrix<f64>;
pub type PhiTable<'a> = exact::PhiTensor<'a, f64>;
pub type Matrix = linalg::CMatrix<f64>;
pub type Env = split::EnvPopulations<f64>;
pub type Dynamics = split::ReducedDynamics<f64>;
pub type Scheme = operational::MeasurementScheme<f64>;
pub type Table = operational::OutcomeTable<f64>;
pub type Mixture = operational::MarkovMixture<f64>;
