//! Short-cycle densities, the Q sweep and the checks built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_gas::gaussian_tail_bound;
use crate::grid::RadialGrid;
use crate::kernels::ModifiedEnsembleParams;

use super::solver::{EquilibriumSolution, MeanField, Regime, SolverOptions};

/// Default step for central differences in λ.
pub const DEFAULT_LAMBDA_STEP: f64 = 1e-5;

fn require_standard(sol: &EquilibriumSolution) -> Result<()> {
    if sol.ensemble.lambda != 0.0 {
        return Err(Error::invalid(format!(
            "short-cycle densities need the λ = 0 solution, got λ = {}",
            sol.ensemble.lambda
        )));
    }
    Ok(())
}

/// `∫ Σ_{q≤Q} (t/(1+t))^q dk/(2π)^d` with `t = ν_e(k)`; each summand is `t(1 − r^Q)`.
pub fn rho_short_analytic(sol: &EquilibriumSolution, q_cutoff: usize, grid: &RadialGrid) -> Result<f64> {
    require_standard(sol)?;
    if q_cutoff < 1 {
        return Err(Error::invalid("Q must be at least 1"));
    }
    let qf = q_cutoff as f64;
    let vals: Vec<f64> = sol
        .measure
        .continuous
        .iter()
        .map(|&t| {
            if t > 0.0 {
                -t * (-qf * (1.0 / t).ln_1p()).exp_m1()
            } else {
                0.0
            }
        })
        .collect();
    grid.integrate(&vals)
}

/// `∫ Σ_{q>Q} (t/(1+t))^q = ∫ t r^Q`, the excited density not yet counted at cutoff `Q`.
pub fn short_gap(sol: &EquilibriumSolution, q_cutoff: usize, grid: &RadialGrid) -> Result<f64> {
    require_standard(sol)?;
    let qf = q_cutoff as f64;
    let vals: Vec<f64> = sol
        .measure
        .continuous
        .iter()
        .map(|&t| {
            if t > 0.0 {
                t * (-qf * (1.0 / t).ln_1p()).exp()
            } else {
                0.0
            }
        })
        .collect();
    grid.integrate(&vals)
}

/// Aitken Δ² limit of a positive sequence decreasing to its limit from above
/// (the gaps), clamped to `[0, x3]`. Degenerate differences return `x3`.
pub fn aitken_limit(x1: f64, x2: f64, x3: f64) -> f64 {
    let d1 = x2 - x1;
    let d2 = x3 - x2;
    let den = d2 - d1;
    if !(den.abs() > 1e-300) || !(d1 < 0.0 && d2 < 0.0) {
        return x3.max(0.0);
    }
    let l = x3 - d2 * d2 / den;
    if l.is_finite() {
        l.clamp(0.0, x3.max(0.0))
    } else {
        x3.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureEntry {
    pub q: usize,
    pub lambda: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationDiagnostics {
    pub k_max: f64,
    pub nodes: usize,
    pub grid_self_test_error: f64,
    /// Estimated excited density beyond `k_max`.
    pub tail_estimate: f64,
    /// Gap `ν_e − ρ_short(Q)` at the largest swept `Q`, before extrapolation.
    pub gap_at_max_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensateReport {
    pub regime: Regime,
    pub mu: f64,
    pub rho_total: f64,
    pub nu_c: f64,
    pub nu_e: f64,
    pub rho_short_by_q: Vec<(usize, f64)>,
    pub gap_by_q: Vec<(usize, f64)>,
    pub rho_short_limit: f64,
    pub rho_short_max_q: f64,
    pub rho_long: f64,
    pub rho_long_unextrapolated: f64,
    pub pressures: Vec<PressureEntry>,
    pub truncation: TruncationDiagnostics,
}

impl CondensateReport {
    /// `|ρ_long − ν_c| / max(ν_c, 1e-12)`.
    pub fn headline_gap(&self) -> f64 {
        (self.rho_long - self.nu_c).abs() / self.nu_c.max(1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremARow {
    pub q: usize,
    pub analytic: f64,
    pub finite_difference: f64,
    pub pressure_plus: f64,
    pub pressure_minus: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    /// Largest μ of the normal phase.
    pub onset: f64,
    /// Upper end of the window in which the condensate sits at k = 0, if found below the
    /// search ceiling.
    pub upper: Option<f64>,
    pub ceiling: f64,
    pub bisection_steps: usize,
}

impl MeanField {
    fn standard(&self) -> Result<ModifiedEnsembleParams> {
        ModifiedEnsembleParams::standard(self.params.beta)
    }

    fn ensemble(&self, q: usize, lambda: f64) -> Result<ModifiedEnsembleParams> {
        ModifiedEnsembleParams::new(q, lambda, self.params.beta)
    }

    /// `[P(λ=h) − P(λ=−h)]/(2h)` at cutoff `Q`, together with the two pressures.
    pub fn rho_short_finite_difference(
        &self,
        q_cutoff: usize,
        h: f64,
        opts: &SolverOptions,
    ) -> Result<(f64, f64, f64)> {
        if !(h > 0.0 && h <= 0.5) {
            return Err(Error::invalid("finite-difference step must lie in (0, 0.5]"));
        }
        let plus = self.solve(&self.ensemble(q_cutoff, h)?, opts)?.pressure;
        let minus = self.solve(&self.ensemble(q_cutoff, -h)?, opts)?.pressure;
        Ok(((plus - minus) / (2.0 * h), plus, minus))
    }

    /// Analytic vs finite-difference λ-derivative of the pressure for each `Q`.
    pub fn theorem_a(&self, qs: &[usize], h: f64, opts: &SolverOptions) -> Result<Vec<TheoremARow>> {
        let base = self.solve(&self.standard()?, opts)?;
        qs.iter()
            .map(|&q| {
                let analytic = rho_short_analytic(&base, q, &self.grid)?;
                let (fd, plus, minus) = self.rho_short_finite_difference(q, h, opts)?;
                Ok(TheoremARow {
                    q,
                    analytic,
                    finite_difference: fd,
                    pressure_plus: plus,
                    pressure_minus: minus,
                    relative_gap: (analytic - fd).abs() / analytic.abs().max(1e-300),
                })
            })
            .collect()
    }

    /// Sweep `ρ_short(Q)` over increasing cutoffs and extrapolate `ρ_long`.
    pub fn q_sweep(&self, qs: &[usize], opts: &SolverOptions) -> Result<CondensateReport> {
        if qs.is_empty() {
            return Err(Error::invalid("Q sweep needs at least one cutoff"));
        }
        if qs.windows(2).any(|w| w[1] <= w[0]) || qs[0] < 1 {
            return Err(Error::invalid("Q values must be positive and strictly increasing"));
        }
        let sol = self.solve(&self.standard()?, opts)?;
        self.sweep_solution(&sol, qs)
    }

    /// Sweep on an existing λ = 0 solution.
    pub fn sweep_solution(&self, sol: &EquilibriumSolution, qs: &[usize]) -> Result<CondensateReport> {
        let nu_e = sol.measure.excited_mass(&self.grid)?;
        let nu_c = sol.measure.condensate;
        let rho_total = nu_c + nu_e;
        let mut rho_short_by_q = Vec::with_capacity(qs.len());
        let mut gap_by_q = Vec::with_capacity(qs.len());
        for &q in qs {
            rho_short_by_q.push((q, rho_short_analytic(sol, q, &self.grid)?));
            gap_by_q.push((q, short_gap(sol, q, &self.grid)?));
        }
        let n = gap_by_q.len();
        let last_gap = gap_by_q[n - 1].1;
        let gap_limit = if n >= 3 {
            aitken_limit(gap_by_q[n - 3].1, gap_by_q[n - 2].1, last_gap)
        } else {
            last_gap
        };
        let rho_short_max_q = rho_short_by_q[n - 1].1;
        let rho_short_limit = nu_e - gap_limit;
        let pressures = qs
            .iter()
            .map(|&q| PressureEntry {
                q,
                lambda: 0.0,
                value: sol.pressure,
            })
            .collect();
        Ok(CondensateReport {
            regime: sol.regime,
            mu: sol.mu,
            rho_total,
            nu_c,
            nu_e,
            rho_short_by_q,
            gap_by_q,
            rho_short_limit,
            rho_short_max_q,
            rho_long: rho_total - rho_short_limit,
            rho_long_unextrapolated: rho_total - rho_short_max_q,
            pressures,
            truncation: TruncationDiagnostics {
                k_max: self.grid.k_max,
                nodes: self.grid.len(),
                grid_self_test_error: self.grid_self_test_error,
                tail_estimate: self.tail_estimate(sol),
                gap_at_max_q: last_gap,
            },
        })
    }

    /// Excited density beyond `k_max`, estimated by holding `g − ε` at its last-node value.
    pub fn tail_estimate(&self, sol: &EquilibriumSolution) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let b = self.params.beta;
        let g_last = sol.effective_field[n - 1];
        let offset = g_last - self.energies()[n - 1];
        let s = b * self.params.dispersion;
        gaussian_tail_bound(self.params.dimension, s, self.grid.k_max) * (-b * offset).exp() / (-(-b * g_last).exp_m1())
    }

    /// Largest nodewise relative distance between `ν_{Q,λ,e}` and `ν_e` for each λ.
    pub fn lambda_continuity(&self, q_cutoff: usize, lambdas: &[f64], opts: &SolverOptions) -> Result<Vec<(f64, f64)>> {
        let base = self.solve(&self.standard()?, opts)?;
        lambdas
            .iter()
            .map(|&l| {
                let sol = self.solve(&self.ensemble(q_cutoff, l)?, opts)?;
                let d = sol
                    .measure
                    .continuous
                    .iter()
                    .zip(&base.measure.continuous)
                    .map(|(a, b)| (a / b - 1.0).abs())
                    .fold(0.0f64, f64::max);
                Ok((l, d))
            })
            .collect()
    }

    /// Whether the condensed branch (condensate at k = 0, `g > 0` elsewhere) exists at `mu`.
    pub fn condensed_at_origin(&self, mu: f64, ens: &ModifiedEnsembleParams, opts: &SolverOptions) -> bool {
        matches!(self.solve_at(mu, ens, opts), Ok(s) if s.regime == Regime::Condensed)
    }

    /// Locate the normal-phase edge and, by bisection, the upper end of the window of
    /// chemical potentials where the condensate sits at the origin.
    pub fn condensed_window(&self, ceiling: f64, tol: f64, opts: &SolverOptions) -> Result<TransitionReport> {
        let ens = self.standard()?;
        let (onset, _) = self.onset(&ens, opts)?;
        if !(ceiling > onset) {
            return Err(Error::invalid(format!(
                "search ceiling {ceiling} is not above the onset {onset}"
            )));
        }
        if self.condensed_at_origin(ceiling, &ens, opts) {
            return Ok(TransitionReport {
                onset,
                upper: None,
                ceiling,
                bisection_steps: 0,
            });
        }
        // The lower end must be inside the window; probe just above the onset.
        let mut lo = onset + 1e-6 * (1.0 + onset.abs());
        if !self.condensed_at_origin(lo, &ens, opts) {
            return Ok(TransitionReport {
                onset,
                upper: Some(onset),
                ceiling,
                bisection_steps: 0,
            });
        }
        let mut hi = ceiling;
        let mut steps = 0;
        while hi - lo > tol && steps < 200 {
            let mid = 0.5 * (lo + hi);
            if self.condensed_at_origin(mid, &ens, opts) {
                lo = mid;
            } else {
                hi = mid;
            }
            steps += 1;
        }
        Ok(TransitionReport {
            onset,
            upper: Some(0.5 * (lo + hi)),
            ceiling,
            bisection_steps: steps,
        })
    }
}
