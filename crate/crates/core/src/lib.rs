//! Convergence thresholds for single and spatially coupled scalar
//! recursions `x ← f(g(x); ε)`.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod continuum;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod potential;
pub mod quadrature;
pub mod search;
pub mod spectral;
pub mod threshold;

pub use dynamics::{Boundary, CoupledConfig, RunOptions, StateVector, Trajectory, Variant};
pub use error::{Error, Result};
pub use model::{CancelationModel, Domain, EpsilonMode, SystemModel};
