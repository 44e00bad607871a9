//! Ideal Bose gas at chemical potential `α ≤ 0` with `ε(k) = dispersion·k²`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sphere_area, RadialGrid};
use crate::kernels::{self, geometric_sum, ModifiedEnsembleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeGasParams {
    pub alpha: f64,
    pub beta: f64,
    pub dimension: usize,
    #[serde(default = "one")]
    pub dispersion: f64,
}

fn one() -> f64 {
    1.0
}

impl FreeGasParams {
    pub fn new(alpha: f64, beta: f64, dimension: usize) -> Result<Self> {
        let p = FreeGasParams {
            alpha,
            beta,
            dimension,
            dispersion: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha <= 0.0) {
            return Err(Error::domain(format!("alpha must be <= 0, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid("beta must be positive"));
        }
        if self.dimension < 1 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(self.dispersion.is_finite() && self.dispersion > 0.0) {
            return Err(Error::invalid("dispersion coefficient must be positive"));
        }
        Ok(())
    }

    fn energy(&self, k: f64) -> f64 {
        self.dispersion * k * k
    }

    /// `∫ e^{-βq ε(k)} dk/(2π)^d = (4πβ c q)^{-d/2}`.
    fn gaussian_mass(&self, q: f64) -> f64 {
        (4.0 * PI * self.beta * self.dispersion * q).powf(-(self.dimension as f64) / 2.0)
    }

    fn require_negative(&self) -> Result<()> {
        self.validate()?;
        if self.alpha >= 0.0 {
            return Err(Error::domain("this quantity needs alpha < 0"));
        }
        Ok(())
    }

    fn require_density_finite(&self) -> Result<()> {
        self.validate()?;
        if self.alpha == 0.0 && self.dimension <= 2 {
            return Err(Error::Divergence(format!(
                "the ideal-gas density diverges at alpha = 0 in d = {}",
                self.dimension
            )));
        }
        Ok(())
    }
}

/// `∫_{K}^{∞} e^{-s k²} dk/(2π)^d`, bounded above using log-concavity of `k^{d-1}e^{-sk²}`.
pub fn gaussian_tail_bound(d: usize, s: f64, k_cut: f64) -> f64 {
    let slope = 2.0 * s * k_cut - (d as f64 - 1.0) / k_cut;
    if slope <= 0.0 {
        return f64::INFINITY;
    }
    sphere_area(d) / (2.0 * PI).powi(d as i32) * k_cut.powi(d as i32 - 1) * (-s * k_cut * k_cut).exp() / slope
}

/// A grid suited to ideal-gas integrals at inverse temperature `beta·dispersion`.
pub fn default_grid(d: usize, beta_eff: f64) -> Result<RadialGrid> {
    let k_max = (40.0 / beta_eff).sqrt();
    RadialGrid::graded(d, k_max, 16, 16, 1e-6 * k_max.min(1.0))
}

/// Modified free pressure `∫ π_{Q,λ}(α − ε(k)) dk/(2π)^d`.
pub fn free_modified_pressure(fp: &FreeGasParams, ens: &ModifiedEnsembleParams, grid: &RadialGrid) -> Result<f64> {
    fp.require_negative()?;
    check_grid(fp, grid)?;
    let mut acc = 0.0;
    for (&k, &w) in grid.nodes.iter().zip(&grid.weights) {
        acc += w * kernels::pi(fp.alpha - fp.energy(k), ens)?;
    }
    Ok(acc)
}

/// The same pressure from the cycle series `Σ_q e^{β(α+λθ_Q(q))q}/(βq) (4πβq)^{-d/2}`.
pub fn free_modified_pressure_series(fp: &FreeGasParams, ens: &ModifiedEnsembleParams) -> Result<f64> {
    fp.require_negative()?;
    ens.validate()?;
    let mut acc = 0.0;
    let mut q = 1usize;
    loop {
        let qf = q as f64;
        let boost = if q <= ens.q_cutoff { ens.lambda } else { 0.0 };
        let term = ((fp.alpha + boost) * fp.beta * qf).exp() / (fp.beta * qf) * fp.gaussian_mass(qf);
        acc += term;
        if q > ens.q_cutoff && term < 1e-18 * acc {
            break;
        }
        q += 1;
        if q > 100_000_000 {
            return Err(Error::NoConvergence {
                what: "free pressure series",
                iterations: q,
                residual: term,
                detail: format!("alpha={}", fp.alpha),
            });
        }
    }
    Ok(acc)
}

/// Standard free pressure `−β⁻¹∫ ln(1 − e^{−β(ε−α)}) dk/(2π)^d`. Finite at `α = 0` in
/// every dimension: the logarithmic singularity at the origin is integrable.
pub fn free_pressure(fp: &FreeGasParams, grid: &RadialGrid) -> Result<f64> {
    fp.validate()?;
    check_grid(fp, grid)?;
    Ok(grid.integrate_fn(|k| kernels::pi0(fp.alpha - fp.energy(k), fp.beta).unwrap_or(0.0)))
}

/// `∂P⁰_{Q,λ}/∂λ|₀ = ∫ Σ_{q≤Q} e^{βq(α−ε)} dk/(2π)^d` by quadrature.
pub fn free_rho_short(fp: &FreeGasParams, q_cutoff: usize, grid: &RadialGrid) -> Result<f64> {
    fp.require_density_finite()?;
    check_grid(fp, grid)?;
    if q_cutoff < 1 {
        return Err(Error::invalid("Q must be at least 1"));
    }
    Ok(grid.integrate_fn(|k| geometric_sum(fp.beta * (fp.alpha - fp.energy(k)), q_cutoff)))
}

/// `Σ_{q≤Q} e^{βαq}(4πβq)^{-d/2}`.
pub fn free_rho_short_series(fp: &FreeGasParams, q_cutoff: usize) -> Result<f64> {
    fp.require_density_finite()?;
    Ok((1..=q_cutoff)
        .map(|q| (fp.alpha * fp.beta * q as f64).exp() * fp.gaussian_mass(q as f64))
        .sum())
}

/// Density carried by cycles longer than `Q`, `∫ Σ_{q>Q} e^{βq(α−ε)}`, evaluated directly.
pub fn free_short_gap(fp: &FreeGasParams, q_cutoff: usize, grid: &RadialGrid) -> Result<f64> {
    fp.require_density_finite()?;
    check_grid(fp, grid)?;
    let qf = q_cutoff as f64 + 1.0;
    Ok(grid.integrate_fn(|k| {
        let s = fp.beta * (fp.alpha - fp.energy(k));
        if s == 0.0 {
            // measure-zero point; the integrand is integrable for d ≥ 3
            return 0.0;
        }
        (s * qf).exp() / (-s.exp_m1())
    }))
}

/// `ν⁰_e(α) = ∫ (e^{β(ε−α)} − 1)⁻¹ dk/(2π)^d`.
pub fn free_density(fp: &FreeGasParams, grid: &RadialGrid) -> Result<f64> {
    fp.require_density_finite()?;
    check_grid(fp, grid)?;
    Ok(grid.integrate_fn(|k| 1.0 / (fp.beta * (fp.energy(k) - fp.alpha)).exp_m1()))
}

/// Truncation estimate for an ideal-gas density integral on `grid`: the neglected
/// tail past `k_max` plus the change from halving the panel order.
pub fn density_error_estimate(fp: &FreeGasParams, grid: &RadialGrid) -> Result<f64> {
    let coarse = RadialGrid::from_panels(grid.dimension, &grid.edges, (grid.order / 2).max(2))?;
    let fine = free_density(fp, grid)?;
    let rough = free_density(fp, &coarse)?;
    let s = fp.beta * fp.dispersion;
    let x = fp.beta * (fp.energy(grid.k_max) - fp.alpha);
    let tail = (fp.beta * fp.alpha).exp() * gaussian_tail_bound(grid.dimension, s, grid.k_max) / (-(-x).exp_m1());
    Ok((fine - rough).abs() + tail)
}

/// Critical density `ν⁰_e(0)` with its truncation estimate.
pub fn critical_density(beta: f64, d: usize) -> Result<(f64, f64)> {
    if d <= 2 {
        return Err(Error::Divergence(format!("no finite critical density in d = {d}")));
    }
    let fp = FreeGasParams::new(0.0, beta, d)?;
    let grid = default_grid(d, beta)?;
    Ok((free_density(&fp, &grid)?, density_error_estimate(&fp, &grid)?))
}

fn check_grid(fp: &FreeGasParams, grid: &RadialGrid) -> Result<()> {
    if grid.dimension != fp.dimension {
        return Err(Error::invalid(format!(
            "grid dimension {} does not match d = {}",
            grid.dimension, fp.dimension
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cycle_density() {
        let fp = FreeGasParams::new(0.0, 1.0, 3).unwrap();
        let g = default_grid(3, 1.0).unwrap();
        let v = free_rho_short(&fp, 1, &g).unwrap();
        assert!((v - 0.022_448_390_265_645_82).abs() < 1e-13);
        assert!((free_rho_short_series(&fp, 1).unwrap() - v).abs() < 1e-13);
    }

    #[test]
    fn low_dimension_divergence_rejected() {
        let g = default_grid(2, 1.0).unwrap();
        let fp = FreeGasParams::new(0.0, 1.0, 2).unwrap();
        assert!(matches!(free_density(&fp, &g), Err(Error::Divergence(_))));
        assert!(critical_density(1.0, 2).is_err());
        assert!(FreeGasParams::new(0.1, 1.0, 3).is_err());
    }

    #[test]
    fn tail_bound_dominates() {
        let full = (4.0 * PI).powf(-1.5);
        let inner = RadialGrid::uniform(3, 3.0, 12, 16)
            .unwrap()
            .integrate_fn(|x| (-x * x).exp());
        let bound = gaussian_tail_bound(3, 1.0, 3.0);
        assert!(full - inner <= bound);
        assert!(bound < 2.0 * (full - inner));
    }
}
