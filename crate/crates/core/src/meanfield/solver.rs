use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{angular_average_kernel, KernelMatrices, MomentumMeasure, RadialGrid};
use crate::kernels::{self, ModifiedEnsembleParams};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Condensed,
    Normal,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Condensed => "condensed",
            Regime::Normal => "normal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target for the largest relative residual of the field equations.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-12,
            max_iterations: 200,
        }
    }
}

/// Converged equilibrium of the modified ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub measure: MomentumMeasure,
    pub pressure: f64,
    /// `g(k_i) = ε(k_i) − μ + a‖ν‖ + (vν)(k_i)` at every node.
    pub effective_field: Vec<f64>,
    pub field_at_origin: f64,
    pub regime: Regime,
    pub iterations: usize,
    pub residual: f64,
    pub mu: f64,
    pub ensemble: ModifiedEnsembleParams,
}

impl EquilibriumSolution {
    pub fn nu_c(&self) -> f64 {
        self.measure.condensate
    }
}

/// Which set of field equations Newton is working on.
#[derive(Debug, Clone, Copy)]
enum Branch {
    /// No condensate; `g(0) > 0` is checked afterwards.
    Normal { mu: f64 },
    /// Condensate weight is an extra unknown fixed by `g(0) = 0`.
    Condensed { mu: f64 },
    /// `g(0) = 0` with zero condensate, `μ` left free: the edge of the normal phase.
    Pinned,
}

struct Iterate {
    g: Vec<f64>,
    nu_c: f64,
}

struct Evaluation {
    residual: Vec<f64>,
    merit: f64,
    nu: Vec<f64>,
    curvature: Vec<f64>,
}

/// Mean-field model on a radial grid with its assembled kernel.
#[derive(Debug, Clone)]
pub struct MeanField {
    pub params: ModelParams,
    pub grid: RadialGrid,
    pub kernel: KernelMatrices,
    pub grid_self_test_error: f64,
    energies: Vec<f64>,
}

impl MeanField {
    pub fn new(params: ModelParams, grid: RadialGrid) -> Result<Self> {
        params.validate()?;
        let kernel = angular_average_kernel(&params.kernel, &grid)?;
        Self::with_kernel(params, grid, kernel)
    }

    pub fn with_kernel(params: ModelParams, grid: RadialGrid, kernel: KernelMatrices) -> Result<Self> {
        params.validate()?;
        if grid.dimension != params.dimension {
            return Err(Error::invalid(format!(
                "grid dimension {} does not match model dimension {}",
                grid.dimension, params.dimension
            )));
        }
        if kernel.n != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: kernel.n,
            });
        }
        let grid_self_test_error = grid.self_test(params.beta * params.dispersion)?;
        let energies = grid.nodes.iter().map(|&k| params.energy(k)).collect();
        Ok(MeanField {
            params,
            grid,
            kernel,
            grid_self_test_error,
            energies,
        })
    }

    /// Graded grid whose cutoff satisfies `β(ε(k_max) − μ) ≥ 40`.
    pub fn default_grid(params: &ModelParams) -> Result<RadialGrid> {
        let k_max = ((40.0 / params.beta + params.mu.max(0.0)) / params.dispersion).sqrt();
        RadialGrid::graded(params.dimension, k_max, 16, 12, 1e-4 * k_max.min(1.0))
    }

    pub fn with_default_grid(params: ModelParams) -> Result<Self> {
        let grid = Self::default_grid(&params)?;
        Self::new(params, grid)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Occupations `π'(−g)` and curvatures `π''(−g)` at every node.
    fn occupations(&self, g: &[f64], ens: &ModifiedEnsembleParams) -> Result<(Vec<f64>, Vec<f64>)> {
        let pairs: Vec<Result<(f64, f64)>> = g
            .par_iter()
            .map(|&gi| Ok((kernels::pi_prime(-gi, ens)?, kernels::pi_double_prime(-gi, ens)?)))
            .collect();
        let mut nu = Vec::with_capacity(g.len());
        let mut h = Vec::with_capacity(g.len());
        for p in pairs {
            let (a, b) = p?;
            nu.push(a);
            h.push(b);
        }
        Ok((nu, h))
    }

    fn weighted(&self, nu: &[f64]) -> Vec<f64> {
        self.grid.weights.iter().zip(nu).map(|(w, v)| w * v).collect()
    }

    fn matvec(&self, m: &[f64], wnu: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .into_par_iter()
            .map(|i| m[i * n..(i + 1) * n].iter().zip(wnu).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn evaluate(&self, branch: Branch, it: &Iterate, ens: &ModifiedEnsembleParams) -> Result<Evaluation> {
        let n = self.len();
        let a = self.params.mean_field_a;
        let (nu, curvature) = self.occupations(&it.g, ens)?;
        let wnu = self.weighted(&nu);
        let s: f64 = wnu.iter().sum();
        let mut residual = vec![0.0; n];
        let mut merit: f64 = 0.0;
        match branch {
            Branch::Normal { mu } => {
                let vn = self.matvec(&self.kernel.w, &wnu);
                for i in 0..n {
                    let field = self.energies[i] - mu + a * s + vn[i];
                    residual[i] = it.g[i] - field;
                    merit = merit.max((residual[i] / it.g[i]).abs());
                }
            }
            Branch::Condensed { .. } | Branch::Pinned => {
                let vn = self.matvec(&self.kernel.diff, &wnu);
                for i in 0..n {
                    let field = self.energies[i] + it.nu_c * self.kernel.d0[i] + vn[i];
                    residual[i] = it.g[i] - field;
                    merit = merit.max((residual[i] / it.g[i]).abs());
                }
            }
        }
        if let Branch::Condensed { mu } = branch {
            let cross: f64 = self.kernel.w0.iter().zip(&wnu).map(|(x, y)| x * y).sum();
            let total = it.nu_c + s;
            let r = a * total + it.nu_c * self.kernel.v00 + cross - mu;
            let scale = a * total.abs() + mu.abs() + f64::MIN_POSITIVE;
            merit = merit.max((r / scale).abs());
            residual.push(r);
        }
        Ok(Evaluation {
            residual,
            merit,
            nu,
            curvature,
        })
    }

    fn jacobian(&self, branch: Branch, ev: &Evaluation) -> DMatrix<f64> {
        let n = self.len();
        let a = self.params.mean_field_a;
        let w = &self.grid.weights;
        let wh: Vec<f64> = w.iter().zip(&ev.curvature).map(|(x, y)| x * y).collect();
        let extra = matches!(branch, Branch::Condensed { .. });
        let m = if extra { n + 1 } else { n };
        let mut j = DMatrix::<f64>::zeros(m, m);
        let normal = matches!(branch, Branch::Normal { .. });
        for r in 0..n {
            for c in 0..n {
                let k = if normal {
                    a + self.kernel.w[r * n + c]
                } else {
                    self.kernel.diff[r * n + c]
                };
                j[(r, c)] = k * wh[c];
            }
            j[(r, r)] += 1.0;
        }
        if extra {
            for r in 0..n {
                j[(r, n)] = -self.kernel.d0[r];
            }
            for c in 0..n {
                j[(n, c)] = -(a + self.kernel.w0[c]) * wh[c];
            }
            j[(n, n)] = a + self.kernel.v00;
        }
        j
    }

    fn newton(
        &self,
        branch: Branch,
        ens: &ModifiedEnsembleParams,
        mut it: Iterate,
        opts: &SolverOptions,
    ) -> Result<(Iterate, Evaluation, usize)> {
        let n = self.len();
        let mut ev = self.evaluate(branch, &it, ens)?;
        let mut history = vec![ev.merit];
        for iter in 0..opts.max_iterations {
            if ev.merit <= opts.tolerance {
                return Ok((it, ev, iter));
            }
            let jac = self.jacobian(branch, &ev);
            let rhs = DVector::from_iterator(ev.residual.len(), ev.residual.iter().map(|r| -r));
            let step = jac.lu().solve(&rhs).ok_or_else(|| Error::NoConvergence {
                what: "mean-field Newton",
                iterations: iter,
                residual: ev.merit,
                detail: "singular Jacobian".into(),
            })?;
            // Stay strictly inside g > 0.
            let mut t: f64 = 1.0;
            for i in 0..n {
                if step[i] < 0.0 {
                    t = t.min(-0.9 * it.g[i] / step[i]);
                }
            }
            let mut accepted = None;
            while t > 1e-14 {
                let trial = Iterate {
                    g: (0..n).map(|i| it.g[i] + t * step[i]).collect(),
                    nu_c: if step.len() > n { it.nu_c + t * step[n] } else { it.nu_c },
                };
                if trial.g.iter().all(|&x| x > 0.0) {
                    let tev = self.evaluate(branch, &trial, ens)?;
                    if tev.merit < ev.merit || tev.merit <= opts.tolerance {
                        accepted = Some((trial, tev));
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((trial, tev)) => {
                    it = trial;
                    ev = tev;
                    history.push(ev.merit);
                }
                None => {
                    return Err(Error::NoConvergence {
                        what: "mean-field Newton",
                        iterations: iter,
                        residual: ev.merit,
                        detail: format!("line search stalled; residual history {:?}", tail(&history)),
                    })
                }
            }
        }
        if ev.merit <= opts.tolerance {
            return Ok((it, ev, opts.max_iterations));
        }
        Err(Error::NoConvergence {
            what: "mean-field Newton",
            iterations: opts.max_iterations,
            residual: ev.merit,
            detail: format!("residual history {:?}", tail(&history)),
        })
    }

    /// Mean-field weight `a‖ν‖ + (vν)(0)` of a continuous profile with no condensate.
    fn origin_shift(&self, nu: &[f64]) -> f64 {
        let wnu = self.weighted(nu);
        let s: f64 = wnu.iter().sum();
        let cross: f64 = self.kernel.w0.iter().zip(&wnu).map(|(x, y)| x * y).sum();
        self.params.mean_field_a * s + cross
    }

    /// Edge of the normal phase: the chemical potential at which `g(0)` first reaches 0,
    /// together with the field there.
    pub fn onset(&self, ens: &ModifiedEnsembleParams, opts: &SolverOptions) -> Result<(f64, Vec<f64>)> {
        ens.validate()?;
        let init = Iterate {
            g: self.energies.clone(),
            nu_c: 0.0,
        };
        let (it, ev, _) = self.newton(Branch::Pinned, ens, init, opts)?;
        Ok((self.origin_shift(&ev.nu), it.g))
    }

    /// Regime implied by the onset: condensed exactly when `μ` exceeds it.
    pub fn classify(&self, mu: f64, ens: &ModifiedEnsembleParams, opts: &SolverOptions) -> Result<(Regime, f64)> {
        let (onset, _) = self.onset(ens, opts)?;
        Ok((if mu > onset { Regime::Condensed } else { Regime::Normal }, onset))
    }

    pub fn solve(&self, ens: &ModifiedEnsembleParams, opts: &SolverOptions) -> Result<EquilibriumSolution> {
        self.solve_at(self.params.mu, ens, opts)
    }

    /// Solve the field equations at chemical potential `mu`.
    pub fn solve_at(&self, mu: f64, ens: &ModifiedEnsembleParams, opts: &SolverOptions) -> Result<EquilibriumSolution> {
        if !mu.is_finite() {
            return Err(Error::invalid("mu must be finite"));
        }
        if (ens.beta - self.params.beta).abs() > 1e-15 * self.params.beta {
            return Err(Error::invalid("ensemble beta differs from model beta"));
        }
        let (onset, pinned) = self.onset(ens, opts)?;
        if mu > onset {
            match self.solve_condensed(mu, ens, &pinned, onset, opts) {
                Ok(sol) if sol.measure.condensate >= 0.0 => Ok(sol),
                Ok(_) => self.solve_normal(mu, ens, &pinned, onset, opts),
                Err(e) => Err(e),
            }
        } else {
            match self.solve_normal(mu, ens, &pinned, onset, opts) {
                Ok(sol) if sol.field_at_origin > 0.0 => Ok(sol),
                _ => self.solve_condensed(mu, ens, &pinned, onset, opts),
            }
        }
    }

    fn solve_normal(
        &self,
        mu: f64,
        ens: &ModifiedEnsembleParams,
        pinned: &[f64],
        onset: f64,
        opts: &SolverOptions,
    ) -> Result<EquilibriumSolution> {
        let shift = (onset - mu).max(1e-8);
        let init = Iterate {
            g: pinned.iter().map(|g| g + shift).collect(),
            nu_c: 0.0,
        };
        let (it, ev, iterations) = self.newton(Branch::Normal { mu }, ens, init, opts)?;
        let g0 = self.origin_shift(&ev.nu) - mu;
        self.finish(mu, ens, it, ev, iterations, g0, Regime::Normal)
    }

    fn solve_condensed(
        &self,
        mu: f64,
        ens: &ModifiedEnsembleParams,
        pinned: &[f64],
        onset: f64,
        opts: &SolverOptions,
    ) -> Result<EquilibriumSolution> {
        let a = self.params.mean_field_a;
        let init = Iterate {
            g: pinned.to_vec(),
            nu_c: (mu - onset) / (a + self.kernel.v00),
        };
        let (it, ev, iterations) = self
            .newton(Branch::Condensed { mu }, ens, init, opts)
            .map_err(|e| match e {
                Error::NoConvergence { residual, .. } => Error::InfeasibleField(format!(
                    "no condensed solution with g > 0 at every node for mu = {mu} \
                     (best relative residual {residual:e}); the macroscopic occupation \
                     does not sit at k = 0 for this kernel"
                )),
                other => other,
            })?;
        let g0 = self.origin_shift(&ev.nu) + it.nu_c * (a + self.kernel.v00) - mu;
        self.finish(mu, ens, it, ev, iterations, g0, Regime::Condensed)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        mu: f64,
        ens: &ModifiedEnsembleParams,
        it: Iterate,
        ev: Evaluation,
        iterations: usize,
        g0: f64,
        regime: Regime,
    ) -> Result<EquilibriumSolution> {
        if let Some(i) = it.g.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::InfeasibleField(format!(
                "g(k) = {} <= 0 at node {i} (k = {})",
                it.g[i], self.grid.nodes[i]
            )));
        }
        let measure = MomentumMeasure {
            condensate: it.nu_c,
            continuous: ev.nu,
        };
        let pressure = -self.grand_potential_at_field(&measure, &it.g, mu, ens)?;
        Ok(EquilibriumSolution {
            measure,
            pressure,
            effective_field: it.g,
            field_at_origin: if regime == Regime::Condensed { 0.0 } else { g0 },
            regime,
            iterations,
            residual: ev.merit,
            mu,
            ensemble: *ens,
        })
    }

    /// `E(m)` when the Legendre points `y_i = −g_i` of the continuous part are known.
    pub(crate) fn grand_potential_at_field(
        &self,
        m: &MomentumMeasure,
        g: &[f64],
        mu: f64,
        ens: &ModifiedEnsembleParams,
    ) -> Result<f64> {
        let entropy: Vec<Result<f64>> = m
            .continuous
            .par_iter()
            .zip(g)
            .map(|(&t, &gi)| Ok(-t * gi - kernels::pi(-gi, ens)?))
            .collect();
        let mut legendre = 0.0;
        for (w, v) in self.grid.weights.iter().zip(entropy) {
            legendre += w * v?;
        }
        Ok(self.energy_density(m)? - mu * m.total_mass(&self.grid)? + legendre)
    }

    /// Field `g` and `g(0)` implied by a measure, computed without cancellation at small k
    /// when a condensate is present.
    pub fn field_of(&self, m: &MomentumMeasure, mu: f64) -> Result<(Vec<f64>, f64)> {
        m.validate(&self.grid)?;
        let a = self.params.mean_field_a;
        let wnu = self.weighted(&m.continuous);
        let g0 = self.origin_shift(&m.continuous) + m.condensate * (a + self.kernel.v00) - mu;
        let vd = self.matvec(&self.kernel.diff, &wnu);
        let g = (0..self.len())
            .map(|i| g0 + self.energies[i] + m.condensate * self.kernel.d0[i] + vd[i])
            .collect();
        Ok((g, g0))
    }

    /// Largest nodewise relative deviation `|ν_e − π'(−g(ν))|/ν_e`, and `|g(0)|` for
    /// condensed solutions.
    pub fn euler_lagrange_residual(&self, sol: &EquilibriumSolution) -> Result<(f64, f64)> {
        let (mut g, g0) = self.field_of(&sol.measure, sol.mu)?;
        if sol.regime == Regime::Condensed {
            // g(0) = 0 is imposed by the condensate equation; it is reported separately.
            g.iter_mut().for_each(|x| *x -= g0);
        }
        let mut worst: f64 = 0.0;
        for (i, &gi) in g.iter().enumerate() {
            if !(gi > 0.0) {
                return Ok((f64::INFINITY, g0.abs()));
            }
            let nu = kernels::pi_prime(-gi, &sol.ensemble)?;
            worst = worst.max((nu / sol.measure.continuous[i] - 1.0).abs());
        }
        let origin = if sol.regime == Regime::Condensed { g0.abs() } else { 0.0 };
        Ok((worst, origin))
    }

    /// `P_{Q,λ}` at the model's chemical potential.
    pub fn pressure(&self, ens: &ModifiedEnsembleParams, opts: &SolverOptions) -> Result<f64> {
        Ok(self.solve(ens, opts)?.pressure)
    }
}

fn tail(h: &[f64]) -> Vec<f64> {
    h[h.len().saturating_sub(6)..].to_vec()
}
