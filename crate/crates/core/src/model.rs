use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::KernelSpec;

/// The physical scenario: inverse temperature, chemical potential, mean-field
/// strength, mode coupling, dimension and dispersion `ε(k) = dispersion·k²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: f64,
    pub mu: f64,
    pub mean_field_a: f64,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_dispersion")]
    pub dispersion: f64,
}

fn default_dimension() -> usize {
    3
}

fn default_dispersion() -> f64 {
    1.0
}

impl ModelParams {
    pub fn new(beta: f64, mu: f64, mean_field_a: f64, kernel: KernelSpec) -> Self {
        ModelParams {
            beta,
            mu,
            mean_field_a,
            kernel,
            dimension: 3,
            dispersion: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !self.mu.is_finite() {
            return Err(Error::invalid("mu must be finite"));
        }
        if !(self.mean_field_a.is_finite() && self.mean_field_a > 0.0) {
            return Err(Error::invalid(format!(
                "mean-field coupling a must be positive, got {}",
                self.mean_field_a
            )));
        }
        if self.dimension < 1 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(self.dispersion.is_finite() && self.dispersion > 0.0) {
            return Err(Error::invalid("dispersion coefficient must be positive"));
        }
        self.kernel.validate()
    }

    #[inline]
    pub fn energy(&self, k: f64) -> f64 {
        self.dispersion * k * k
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        ModelParams { mu, ..self.clone() }
    }
}
