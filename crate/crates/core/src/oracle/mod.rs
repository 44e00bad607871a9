//! Exact finite-volume combinatorics of the cycle representation.
//!
//! Configurations are multisets of cycles `(q, k)`: `q` particles sharing mode `k`.
//! A configuration weighs
//!
//! ```text
//! Π_i e^{β(μ + λθ_Q(q_i) − ε_k_i) q_i} / q_i  /  Π_types m!  ·  e^{−βU(n)}
//! U(n) = (a/2V) n² + (1/2V) Σ_{k,k'} v(k,k') n_k n_k'
//! ```
//!
//! where `n_k` is the number of particles in mode `k`. Summing the same Boltzmann factor
//! over occupation vectors gives the partition function a second, independent way.

mod mc;

pub use mc::{mc_sample_cycles, McEstimate, McOptions, McResult};

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::KernelSpec;
use crate::kernels::{self, ModifiedEnsembleParams};

/// Largest number of enumerated configurations before giving up.
pub const DEFAULT_STATE_BUDGET: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub momentum: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteVolume {
    pub volume: f64,
    pub modes: Vec<Mode>,
}

impl FiniteVolume {
    /// Modes with `ε(k) = dispersion·|k|²`.
    pub fn new(volume: f64, momenta: Vec<Vec<f64>>, dispersion: f64) -> Result<Self> {
        let modes = momenta
            .into_iter()
            .map(|k| {
                let k2: f64 = k.iter().map(|x| x * x).sum();
                Mode {
                    energy: dispersion * k2,
                    momentum: k,
                }
            })
            .collect();
        let v = FiniteVolume { volume, modes };
        v.validate()?;
        Ok(v)
    }

    /// The first `count` modes of the cubic torus of side `length` in `d` dimensions, in the
    /// order `0, +e₁, −e₁, +e₂, −e₂, …` (times `2π/length`).
    pub fn torus_axis_modes(d: usize, length: f64, dispersion: f64, count: usize) -> Result<Self> {
        if d < 1 || !(length > 0.0) {
            return Err(Error::invalid("torus needs d >= 1 and a positive side length"));
        }
        if count < 1 || count > 2 * d + 1 {
            return Err(Error::invalid(format!("count must lie in 1..={}", 2 * d + 1)));
        }
        let unit = 2.0 * PI / length;
        let mut momenta = vec![vec![0.0; d]];
        for axis in 0..d {
            for sign in [1.0, -1.0] {
                let mut k = vec![0.0; d];
                k[axis] = sign * unit;
                momenta.push(k);
            }
        }
        momenta.truncate(count);
        Self::new(length.powi(d as i32), momenta, dispersion)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.volume.is_finite() && self.volume > 0.0) {
            return Err(Error::invalid("volume must be positive"));
        }
        if self.modes.is_empty() {
            return Err(Error::invalid("need at least one mode"));
        }
        let d = self.modes[0].momentum.len();
        if self
            .modes
            .iter()
            .any(|m| m.momentum.len() != d || !m.energy.is_finite())
        {
            return Err(Error::invalid("modes need a common dimension and finite energies"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Interaction data of the finite-volume Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleModel {
    pub beta: f64,
    pub mu: f64,
    /// Mean-field strength; zero is admitted here for ideal-gas checks.
    pub mean_field_a: f64,
    #[serde(default)]
    pub kernel: KernelSpec,
}

impl OracleModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid("beta must be positive"));
        }
        if !self.mu.is_finite() {
            return Err(Error::invalid("mu must be finite"));
        }
        if !(self.mean_field_a.is_finite() && self.mean_field_a >= 0.0) {
            return Err(Error::invalid("mean-field coupling must be finite and nonnegative"));
        }
        self.kernel.validate()
    }
}

/// Precomputed per-instance data shared by the enumerations and the sampler.
pub(crate) struct Instance {
    pub beta: f64,
    pub volume: f64,
    pub a: f64,
    pub energies: Vec<f64>,
    /// `v(k, k')` for every pair of modes, row-major.
    pub pair: Vec<f64>,
    pub m: usize,
}

impl Instance {
    pub fn new(vol: &FiniteVolume, model: &OracleModel) -> Result<Self> {
        vol.validate()?;
        model.validate()?;
        let m = vol.len();
        let mut pair = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                pair[i * m + j] = model
                    .kernel
                    .eval_vectors(&vol.modes[i].momentum, &vol.modes[j].momentum);
            }
        }
        Ok(Instance {
            beta: model.beta,
            volume: vol.volume,
            a: model.mean_field_a,
            energies: vol.modes.iter().map(|md| md.energy).collect(),
            pair,
            m,
        })
    }

    /// `U(n)` for occupations `occ`.
    pub fn interaction(&self, occ: &[u32]) -> f64 {
        let n: f64 = occ.iter().map(|&x| x as f64).sum();
        let mut quad = 0.0;
        for i in 0..self.m {
            if occ[i] == 0 {
                continue;
            }
            let row = &self.pair[i * self.m..(i + 1) * self.m];
            let s: f64 = row.iter().zip(occ).map(|(v, &o)| v * o as f64).sum();
            quad += occ[i] as f64 * s;
        }
        (0.5 * self.a * n * n + 0.5 * quad) / self.volume
    }

    fn min_pair_eigenvalue(&self) -> f64 {
        let mat = DMatrix::from_fn(self.m, self.m, |i, j| {
            0.5 * (self.pair[i * self.m + j] + self.pair[j * self.m + i])
        });
        SymmetricEigen::new(mat).eigenvalues.min()
    }

    /// Upper bound on the weight of all configurations with more than `n_max` particles,
    /// for any cycle weight up to `lambda_plus`.
    pub fn tail_bound(&self, mu: f64, lambda_plus: f64, n_max: usize) -> f64 {
        let a_eff = self.a + self.min_pair_eigenvalue().min(0.0);
        let logs: Vec<f64> = self
            .energies
            .iter()
            .map(|e| self.beta * (mu + lambda_plus - e))
            .collect();
        let log_top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if a_eff <= 0.0 && log_top >= 0.0 {
            return f64::INFINITY;
        }
        let y: Vec<f64> = logs.iter().map(|l| (l - log_top).exp()).collect();
        let c = self.beta * a_eff.max(0.0) / (2.0 * self.volume);
        // h_n(y) by the column recurrence, carried along as n grows.
        let mut h = vec![1.0; self.m];
        let mut total = 0.0;
        let mut n = 0usize;
        loop {
            n += 1;
            let mut prev = 0.0;
            for j in 0..self.m {
                let below = if j == 0 { 0.0 } else { prev };
                h[j] = below + y[j] * h[j];
                prev = h[j];
            }
            let hn = h[self.m - 1];
            if n > n_max {
                let log_term = n as f64 * log_top + hn.ln() - c * (n * n) as f64;
                let term = log_term.exp();
                total += term;
                let falling = 2.0 * c * n as f64 > log_top + (self.m as f64) / n as f64;
                if falling && (term <= 1e-30 * total || term == 0.0) {
                    break;
                }
                if n > n_max + 1_000_000 {
                    return f64::INFINITY;
                }
            }
        }
        total
    }
}

/// Result of summing the cycle representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSum {
    pub xi: f64,
    /// Contribution of configurations with exactly `n` particles, `n = 0..=N_max`.
    pub by_particle_number: Vec<f64>,
    /// `Σ_config w · (#cycles of length q)` for `q = 1..=N_max`, unnormalized.
    pub cycle_counts: Vec<f64>,
    pub tail_bound: f64,
    pub configurations: usize,
}

struct Walker<'a> {
    inst: &'a Instance,
    /// `ln φ` for each type `(q, k)`, indexed `(q-1)*m + k`.
    log_phi: Vec<f64>,
    n_max: usize,
    budget: usize,
    visited: usize,
    occ: Vec<u32>,
    counts: Vec<u32>,
    by_n: Vec<f64>,
    cycle_counts: Vec<f64>,
}

impl Walker<'_> {
    /// Extend a configuration whose last part has type `last` with multiplicity `mult`.
    fn visit(&mut self, n: usize, last: usize, mult: u32, log_w: f64) -> Result<()> {
        self.visited += 1;
        if self.visited > self.budget {
            return Err(Error::Budget(format!(
                "more than {} configurations at N_max = {}",
                self.budget, self.n_max
            )));
        }
        let w = (log_w - self.inst.beta * self.inst.interaction(&self.occ)).exp();
        self.by_n[n] += w;
        for (q, &c) in self.counts.iter().enumerate() {
            if c > 0 {
                self.cycle_counts[q] += w * c as f64;
            }
        }
        let m = self.inst.m;
        let start = if n == 0 { 0 } else { last };
        for t in start..self.log_phi.len() {
            let q = t / m + 1;
            if n + q > self.n_max {
                break;
            }
            let k = t % m;
            let new_mult = if n > 0 && t == last { mult + 1 } else { 1 };
            self.occ[k] += q as u32;
            self.counts[q - 1] += 1;
            self.visit(n + q, t, new_mult, log_w + self.log_phi[t] - (new_mult as f64).ln())?;
            self.occ[k] -= q as u32;
            self.counts[q - 1] -= 1;
        }
        Ok(())
    }
}

/// `ln φ(q, k) = β(μ + λθ_Q(q) − ε_k) q − ln q`.
fn log_cycle_weight(inst: &Instance, mu: f64, ens: &ModifiedEnsembleParams, q: usize, k: usize) -> f64 {
    let boost = if q <= ens.q_cutoff { ens.lambda } else { 0.0 };
    inst.beta * (mu + boost - inst.energies[k]) * q as f64 - (q as f64).ln()
}

fn check_ensemble(model: &OracleModel, ens: &ModifiedEnsembleParams) -> Result<()> {
    ens.validate()?;
    if (ens.beta - model.beta).abs() > 1e-15 * model.beta {
        return Err(Error::invalid("ensemble beta differs from model beta"));
    }
    Ok(())
}

/// Cycle-representation partition function `Ξ_{Q,λ,Λ}` truncated at `n_max` particles.
pub fn xi_cycle_sum(
    vol: &FiniteVolume,
    model: &OracleModel,
    ens: &ModifiedEnsembleParams,
    n_max: usize,
) -> Result<CycleSum> {
    xi_cycle_sum_with_budget(vol, model, ens, n_max, DEFAULT_STATE_BUDGET)
}

pub fn xi_cycle_sum_with_budget(
    vol: &FiniteVolume,
    model: &OracleModel,
    ens: &ModifiedEnsembleParams,
    n_max: usize,
    budget: usize,
) -> Result<CycleSum> {
    check_ensemble(model, ens)?;
    if n_max < 1 {
        return Err(Error::invalid("N_max must be at least 1"));
    }
    let inst = Instance::new(vol, model)?;
    let m = inst.m;
    let log_phi = (0..n_max * m)
        .map(|t| log_cycle_weight(&inst, model.mu, ens, t / m + 1, t % m))
        .collect();
    let mut walker = Walker {
        inst: &inst,
        log_phi,
        n_max,
        budget,
        visited: 0,
        occ: vec![0; m],
        counts: vec![0; n_max],
        by_n: vec![0.0; n_max + 1],
        cycle_counts: vec![0.0; n_max],
    };
    walker.visit(0, 0, 0, 0.0)?;
    let xi = walker.by_n.iter().sum();
    Ok(CycleSum {
        xi,
        tail_bound: inst.tail_bound(model.mu, ens.lambda.max(0.0), n_max),
        by_particle_number: walker.by_n,
        cycle_counts: walker.cycle_counts,
        configurations: walker.visited,
    })
}

/// `Σ_{n_k ≥ 0, Σn_k ≤ n_max} e^{β(μn − Σ ε_k n_k)} e^{−βU(n)}`.
pub fn xi_occupation_sum(vol: &FiniteVolume, model: &OracleModel, n_max: usize) -> Result<(f64, f64)> {
    xi_occupation_sum_with_budget(vol, model, n_max, DEFAULT_STATE_BUDGET)
}

pub fn xi_occupation_sum_with_budget(
    vol: &FiniteVolume,
    model: &OracleModel,
    n_max: usize,
    budget: usize,
) -> Result<(f64, f64)> {
    if n_max < 1 {
        return Err(Error::invalid("N_max must be at least 1"));
    }
    let inst = Instance::new(vol, model)?;
    let m = inst.m;
    let mut occ = vec![0u32; m];
    let mut total = 0.0;
    let mut visited = 0usize;
    #[allow(clippy::too_many_arguments)]
    fn rec(
        inst: &Instance,
        mu: f64,
        j: usize,
        left: usize,
        occ: &mut Vec<u32>,
        total: &mut f64,
        visited: &mut usize,
        budget: usize,
    ) -> Result<()> {
        if j == inst.m {
            *visited += 1;
            if *visited > budget {
                return Err(Error::Budget(format!("more than {budget} occupation vectors")));
            }
            let lin: f64 = occ.iter().zip(&inst.energies).map(|(&o, e)| (mu - e) * o as f64).sum();
            *total += (inst.beta * (lin - inst.interaction(occ))).exp();
            return Ok(());
        }
        for c in 0..=left {
            occ[j] = c as u32;
            rec(inst, mu, j + 1, left - c, occ, total, visited, budget)?;
        }
        occ[j] = 0;
        Ok(())
    }
    rec(&inst, model.mu, 0, n_max, &mut occ, &mut total, &mut visited, budget)?;
    let _ = m;
    Ok((total, inst.tail_bound(model.mu, 0.0, n_max)))
}

/// Closed form `Π_k exp(β π_{Q,λ}(μ − ε_k))` of the untruncated ideal-gas cycle sum.
pub fn xi_free_closed_form(vol: &FiniteVolume, model: &OracleModel, ens: &ModifiedEnsembleParams) -> Result<f64> {
    model.validate()?;
    if model.mean_field_a != 0.0 || !model.kernel.is_none() {
        return Err(Error::invalid("the factorized form needs a = 0 and no mode coupling"));
    }
    let mut log = 0.0;
    for md in &vol.modes {
        log += model.beta * kernels::pi(model.mu - md.energy, ens)?;
    }
    Ok(log.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleDistribution {
    /// `(q, ρ_Λ(q))` for `q = 1..=N_max`.
    pub rho_q: Vec<(usize, f64)>,
    /// `(q, p_Λ(q))`, `p = qρ(q)/ρ`.
    pub p_q: Vec<(usize, f64)>,
    pub rho_total: f64,
    pub xi: f64,
    pub tail_bound: f64,
}

impl CycleDistribution {
    pub fn p_sum(&self) -> f64 {
        self.p_q.iter().map(|(_, p)| p).sum()
    }

    /// `Σ_{q≤Q} q ρ_Λ(q)`.
    pub fn short_density(&self, q_cutoff: usize) -> f64 {
        self.rho_q
            .iter()
            .filter(|(q, _)| *q <= q_cutoff)
            .map(|(q, r)| *q as f64 * r)
            .sum()
    }
}

/// Cycle densities `ρ_Λ(q) = E[#q-cycles]/|Λ|` and probabilities `p_Λ(q)` in the ensemble `ens`.
pub fn cycle_density(
    vol: &FiniteVolume,
    model: &OracleModel,
    ens: &ModifiedEnsembleParams,
    n_max: usize,
) -> Result<CycleDistribution> {
    let sum = xi_cycle_sum(vol, model, ens, n_max)?;
    Ok(distribution_from(&sum, vol.volume))
}

pub(crate) fn distribution_from(sum: &CycleSum, volume: f64) -> CycleDistribution {
    let rho_q: Vec<(usize, f64)> = sum
        .cycle_counts
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c / sum.xi / volume))
        .collect();
    let rho_total: f64 = rho_q.iter().map(|(q, r)| *q as f64 * r).sum();
    let p_q = rho_q
        .iter()
        .map(|(q, r)| {
            (
                *q,
                if rho_total > 0.0 {
                    *q as f64 * r / rho_total
                } else {
                    0.0
                },
            )
        })
        .collect();
    CycleDistribution {
        rho_q,
        p_q,
        rho_total,
        xi: sum.xi,
        tail_bound: sum.tail_bound,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaDerivative {
    pub q_cutoff: usize,
    /// `[P(h) − P(−h)]/(2h)` with `P = ln Ξ/(β|Λ|)`.
    pub finite_difference: f64,
    /// `Σ_{q≤Q} q ρ_Λ(q)` at λ = 0.
    pub direct_sum: f64,
    pub tail_bound: f64,
}

/// Finite-volume check of `Σ_{q≤Q} qρ_Λ(q) = ∂P_{Q,λ,Λ}/∂λ|₀`.
pub fn finite_volume_lambda_derivative(
    vol: &FiniteVolume,
    model: &OracleModel,
    q_cutoff: usize,
    n_max: usize,
    h: f64,
) -> Result<LambdaDerivative> {
    if !(h > 0.0 && h <= 0.5) {
        return Err(Error::invalid("finite-difference step must lie in (0, 0.5]"));
    }
    let ens = |l: f64| ModifiedEnsembleParams::new(q_cutoff, l, model.beta);
    let base = xi_cycle_sum(vol, model, &ens(0.0)?, n_max)?;
    let plus = xi_cycle_sum(vol, model, &ens(h)?, n_max)?;
    let minus = xi_cycle_sum(vol, model, &ens(-h)?, n_max)?;
    let scale = model.beta * vol.volume;
    let fd = (plus.xi.ln() - minus.xi.ln()) / (2.0 * h * scale);
    let dist = distribution_from(&base, vol.volume);
    Ok(LambdaDerivative {
        q_cutoff,
        finite_difference: fd,
        direct_sum: dist.short_density(q_cutoff),
        tail_bound: plus.tail_bound.max(base.tail_bound),
    })
}

/// `(1/β|Λ|) ∂ ln Ξ/∂μ` by central differences of the occupation sum.
pub fn density_from_mu_derivative(vol: &FiniteVolume, model: &OracleModel, n_max: usize, h: f64) -> Result<f64> {
    let at = |mu: f64| -> Result<f64> {
        let m = OracleModel { mu, ..model.clone() };
        Ok(xi_occupation_sum(vol, &m, n_max)?.0.ln())
    };
    Ok((at(model.mu + h)? - at(model.mu - h)?) / (2.0 * h * model.beta * vol.volume))
}
