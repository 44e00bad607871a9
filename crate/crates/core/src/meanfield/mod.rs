//! Thermodynamic-limit equilibrium of the perturbed mean-field model.

mod functional;
mod solver;
mod sweep;

pub use functional::{entropy_term, free_equilibrium_measure, legendre_integral, rate_function};
pub use solver::{EquilibriumSolution, MeanField, Regime, SolverOptions};
pub use sweep::{
    aitken_limit, rho_short_analytic, short_gap, CondensateReport, PressureEntry, TheoremARow, TransitionReport,
    TruncationDiagnostics, DEFAULT_LAMBDA_STEP,
};
