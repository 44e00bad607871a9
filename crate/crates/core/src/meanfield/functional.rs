use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::free_gas::{free_modified_pressure, FreeGasParams};
use crate::grid::{MomentumMeasure, RadialGrid};
use crate::kernels::{self, ModifiedEnsembleParams};

use super::solver::MeanField;

/// `∫ π*_{Q,λ}(m_e(k)) dk/(2π)^d`, with `π*(0) = 0`.
pub fn legendre_integral(m: &MomentumMeasure, ens: &ModifiedEnsembleParams, grid: &RadialGrid) -> Result<f64> {
    m.validate(grid)?;
    let vals: Vec<Result<f64>> = m
        .continuous
        .par_iter()
        .map(|&t| kernels::pi_star_or_zero(t, ens))
        .collect();
    let mut acc = 0.0;
    for (w, v) in grid.weights.iter().zip(vals) {
        acc += w * v?;
    }
    Ok(acc)
}

/// `T s_{Q,λ}(m) = −∫ π*_{Q,λ}(m_e)`. The condensate does not enter.
pub fn entropy_term(m: &MomentumMeasure, ens: &ModifiedEnsembleParams, grid: &RadialGrid) -> Result<f64> {
    Ok(-legendre_integral(m, ens, grid)?)
}

/// The equilibrium measure of the free modified ensemble, `m_e = π'(α − ε)`, no condensate.
pub fn free_equilibrium_measure(
    fp: &FreeGasParams,
    ens: &ModifiedEnsembleParams,
    grid: &RadialGrid,
) -> Result<MomentumMeasure> {
    fp.validate()?;
    if fp.alpha >= 0.0 {
        return Err(Error::domain("free equilibrium needs alpha < 0"));
    }
    let continuous = grid
        .nodes
        .iter()
        .map(|&k| kernels::pi_prime(fp.alpha - fp.dispersion * k * k, ens))
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentumMeasure {
        condensate: 0.0,
        continuous,
    })
}

/// Free-gas large-deviation rate
/// `I⁰(m) = −∫(α − ε) m(dk) + ∫ π*(m_e) + P⁰_{Q,λ}`.
pub fn rate_function(
    m: &MomentumMeasure,
    fp: &FreeGasParams,
    ens: &ModifiedEnsembleParams,
    grid: &RadialGrid,
) -> Result<f64> {
    fp.validate()?;
    if fp.alpha >= 0.0 {
        return Err(Error::domain("rate function needs alpha < 0"));
    }
    m.validate(grid)?;
    let linear = grid.integrate_fn_indexed(|i, k| (fp.alpha - fp.dispersion * k * k) * m.continuous[i])
        + fp.alpha * m.condensate;
    let p0 = free_modified_pressure(fp, ens, grid)?;
    Ok(-linear + legendre_integral(m, ens, grid)? + p0)
}

impl MeanField {
    /// `u(m) = ⟨ε, m⟩ + (a/2)‖m‖² + ½⟨m, vm⟩`.
    pub fn energy_density(&self, m: &MomentumMeasure) -> Result<f64> {
        m.validate(&self.grid)?;
        let kinetic = self.grid.integrate(
            &self
                .energies()
                .iter()
                .zip(&m.continuous)
                .map(|(e, v)| e * v)
                .collect::<Vec<_>>(),
        )?;
        let total = m.total_mass(&self.grid)?;
        let pair = self.kernel.pair_energy(m, &self.grid)?;
        Ok(kinetic + 0.5 * self.params.mean_field_a * total * total + 0.5 * pair)
    }

    /// `E_{Q,λ}(m)` at the model's chemical potential.
    pub fn grand_potential(&self, m: &MomentumMeasure, ens: &ModifiedEnsembleParams) -> Result<f64> {
        self.grand_potential_with_mu(m, ens, self.params.mu)
    }

    pub fn grand_potential_with_mu(&self, m: &MomentumMeasure, ens: &ModifiedEnsembleParams, mu: f64) -> Result<f64> {
        Ok(self.energy_density(m)? - mu * m.total_mass(&self.grid)? + legendre_integral(m, ens, &self.grid)?)
    }

    /// `G(m) = (μ − α)‖m‖ − (a/2)‖m‖² − ½⟨m, vm⟩`, the chemical-potential and interaction
    /// part of the tilted free ensemble.
    pub fn interaction_gain(&self, m: &MomentumMeasure, alpha: f64, mu: f64) -> Result<f64> {
        let total = m.total_mass(&self.grid)?;
        let pair = self.kernel.pair_energy(m, &self.grid)?;
        Ok((mu - alpha) * total - 0.5 * self.params.mean_field_a * total * total - 0.5 * pair)
    }

    /// `G(m) − I⁰(m) + P⁰`, which equals `−E(m)` whatever the reference `α`.
    pub fn variational_pressure(
        &self,
        m: &MomentumMeasure,
        alpha: f64,
        mu: f64,
        ens: &ModifiedEnsembleParams,
    ) -> Result<f64> {
        let fp = FreeGasParams {
            alpha,
            beta: self.params.beta,
            dimension: self.params.dimension,
            dispersion: self.params.dispersion,
        };
        let p0 = free_modified_pressure(&fp, ens, &self.grid)?;
        Ok(self.interaction_gain(m, alpha, mu)? - rate_function(m, &fp, ens, &self.grid)? + p0)
    }
}
