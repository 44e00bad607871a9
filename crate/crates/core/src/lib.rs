//! Permutation-cycle statistics and condensate densities for the ideal and the
//! perturbed mean-field Bose gas.

// `!(x > 0.0)` is used on purpose so that NaN fails every validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod free_gas;
pub mod grid;
pub mod kernels;
pub mod meanfield;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
pub use grid::{KernelMatrices, KernelSpec, MomentumMeasure, RadialGrid};
pub use kernels::ModifiedEnsembleParams;
pub use meanfield::{EquilibriumSolution, MeanField, Regime, SolverOptions};
pub use model::ModelParams;
