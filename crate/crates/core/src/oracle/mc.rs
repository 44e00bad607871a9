//! Metropolis sampling of cycle configurations.
//!
//! The chain lives on multisets of cycles `(q, k)` with at most `n_max` particles and
//! cycle lengths up to `q_max`. Moves: insert a random cycle, delete one, grow or shrink
//! one by a particle, move one to another mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::ModifiedEnsembleParams;

use super::{check_ensemble, log_cycle_weight, FiniteVolume, Instance, OracleModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub steps: usize,
    pub burn_in: usize,
    pub batches: usize,
    pub seed: u64,
    pub n_max: usize,
    /// Largest proposed cycle length; defaults to `n_max` when zero.
    pub q_max: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            steps: 4_000_000,
            burn_in: 100_000,
            batches: 50,
            seed: 1,
            n_max: 14,
            q_max: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub q: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub rho_q: Vec<McEstimate>,
    pub p_q: Vec<McEstimate>,
    pub density: f64,
    pub density_stderr: f64,
    pub acceptance_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

struct Chain<'a> {
    inst: &'a Instance,
    /// `ln φ(q, k)` indexed `(q-1)*m + k`.
    log_phi: Vec<f64>,
    cycles: Vec<(usize, usize)>,
    occ: Vec<u32>,
    n: usize,
    energy: f64,
    counts: Vec<u64>,
}

impl Chain<'_> {
    fn lphi(&self, q: usize, k: usize) -> f64 {
        self.log_phi[(q - 1) * self.inst.m + k]
    }

    /// Interaction energy after moving `dq` particles into mode `k` (negative to remove).
    fn trial_energy(&mut self, k: usize, dq: i64) -> f64 {
        self.occ[k] = (self.occ[k] as i64 + dq) as u32;
        let e = self.inst.interaction(&self.occ);
        self.occ[k] = (self.occ[k] as i64 - dq) as u32;
        e
    }

    fn trial_energy2(&mut self, k_out: usize, k_in: usize, q: u32) -> f64 {
        self.occ[k_out] -= q;
        self.occ[k_in] += q;
        let e = self.inst.interaction(&self.occ);
        self.occ[k_in] -= q;
        self.occ[k_out] += q;
        e
    }
}

/// Sample the cycle distribution of the (truncated) modified ensemble.
pub fn mc_sample_cycles(
    vol: &FiniteVolume,
    model: &OracleModel,
    ens: &ModifiedEnsembleParams,
    opts: &McOptions,
) -> Result<McResult> {
    check_ensemble(model, ens)?;
    if opts.n_max < 1 || opts.batches < 2 || opts.steps < opts.batches {
        return Err(Error::invalid("need n_max >= 1, batches >= 2 and steps >= batches"));
    }
    let q_max = if opts.q_max == 0 {
        opts.n_max
    } else {
        opts.q_max.min(opts.n_max)
    };
    let inst = Instance::new(vol, model)?;
    let m = inst.m;
    let log_phi = (0..q_max * m)
        .map(|t| log_cycle_weight(&inst, model.mu, ens, t / m + 1, t % m))
        .collect();
    let mut chain = Chain {
        inst: &inst,
        log_phi,
        cycles: Vec::new(),
        occ: vec![0; m],
        n: 0,
        energy: 0.0,
        counts: vec![0; q_max],
    };
    let beta = model.beta;
    let log_choices = ((q_max * m) as f64).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut accepted = 0usize;
    let mut proposed = 0usize;

    let per_batch = opts.steps / opts.batches;
    let mut batch_counts = vec![vec![0.0f64; q_max]; opts.batches];
    let mut batch_n = vec![0.0f64; opts.batches];

    for step in 0..(opts.burn_in + per_batch * opts.batches) {
        let r = chain.cycles.len();
        let u: f64 = rng.random();
        let measuring = step >= opts.burn_in;
        if measuring {
            proposed += 1;
        }
        let ok = if u < 0.25 {
            // insert
            let q = rng.random_range(1..=q_max);
            let k = rng.random_range(0..m);
            if chain.n + q > opts.n_max {
                false
            } else {
                let e_new = chain.trial_energy(k, q as i64);
                let log_a = chain.lphi(q, k) - beta * (e_new - chain.energy) + log_choices - ((r + 1) as f64).ln();
                if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
                    chain.cycles.push((q, k));
                    chain.occ[k] += q as u32;
                    chain.n += q;
                    chain.energy = e_new;
                    chain.counts[q - 1] += 1;
                    true
                } else {
                    false
                }
            }
        } else if u < 0.5 {
            // delete
            if r == 0 {
                false
            } else {
                let j = rng.random_range(0..r);
                let (q, k) = chain.cycles[j];
                let e_new = chain.trial_energy(k, -(q as i64));
                let log_a = (r as f64).ln() - beta * (e_new - chain.energy) - chain.lphi(q, k) - log_choices;
                if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
                    chain.cycles.swap_remove(j);
                    chain.occ[k] -= q as u32;
                    chain.n -= q;
                    chain.energy = e_new;
                    chain.counts[q - 1] -= 1;
                    true
                } else {
                    false
                }
            }
        } else if u < 0.75 {
            // resize by one particle
            if r == 0 {
                false
            } else {
                let j = rng.random_range(0..r);
                let (q, k) = chain.cycles[j];
                let grow = rng.random::<bool>();
                let q2 = if grow { q + 1 } else { q - 1 };
                if q2 < 1 || q2 > q_max || (grow && chain.n + 1 > opts.n_max) {
                    false
                } else {
                    let dq = if grow { 1 } else { -1 };
                    let e_new = chain.trial_energy(k, dq);
                    let log_a = chain.lphi(q2, k) - chain.lphi(q, k) - beta * (e_new - chain.energy);
                    if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
                        chain.cycles[j] = (q2, k);
                        chain.occ[k] = (chain.occ[k] as i64 + dq) as u32;
                        chain.n = (chain.n as i64 + dq) as usize;
                        chain.energy = e_new;
                        chain.counts[q - 1] -= 1;
                        chain.counts[q2 - 1] += 1;
                        true
                    } else {
                        false
                    }
                }
            }
        } else {
            // move a cycle to another mode
            if r == 0 || m == 1 {
                false
            } else {
                let j = rng.random_range(0..r);
                let (q, k) = chain.cycles[j];
                let mut k2 = rng.random_range(0..m - 1);
                if k2 >= k {
                    k2 += 1;
                }
                let e_new = chain.trial_energy2(k, k2, q as u32);
                let log_a = chain.lphi(q, k2) - chain.lphi(q, k) - beta * (e_new - chain.energy);
                if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
                    chain.cycles[j] = (q, k2);
                    chain.occ[k] -= q as u32;
                    chain.occ[k2] += q as u32;
                    chain.energy = e_new;
                    true
                } else {
                    false
                }
            }
        };
        if measuring {
            if ok {
                accepted += 1;
            }
            let b = (step - opts.burn_in) / per_batch;
            for (acc, &c) in batch_counts[b].iter_mut().zip(&chain.counts) {
                *acc += c as f64;
            }
            batch_n[b] += chain.n as f64;
        }
    }

    let v = vol.volume;
    let nb = opts.batches as f64;
    let stats = |xs: &[f64]| -> (f64, f64) {
        let mean = xs.iter().sum::<f64>() / nb;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nb - 1.0);
        (mean, (var / nb).sqrt())
    };
    let mut rho_q = Vec::with_capacity(q_max);
    let mut p_q = Vec::with_capacity(q_max);
    for q in 1..=q_max {
        let rhos: Vec<f64> = batch_counts.iter().map(|bc| bc[q - 1] / per_batch as f64 / v).collect();
        let ps: Vec<f64> = batch_counts
            .iter()
            .zip(&batch_n)
            .map(|(bc, &bn)| if bn > 0.0 { q as f64 * bc[q - 1] / bn } else { 0.0 })
            .collect();
        let (rm, rs) = stats(&rhos);
        let (pm, ps_err) = stats(&ps);
        rho_q.push(McEstimate {
            q,
            mean: rm,
            stderr: rs,
        });
        p_q.push(McEstimate {
            q,
            mean: pm,
            stderr: ps_err,
        });
    }
    let dens: Vec<f64> = batch_n.iter().map(|bn| bn / per_batch as f64 / v).collect();
    let (density, density_stderr) = stats(&dens);
    Ok(McResult {
        rho_q,
        p_q,
        density,
        density_stderr,
        acceptance_rate: accepted as f64 / proposed.max(1) as f64,
        steps: per_batch * opts.batches,
        seed: opts.seed,
    })
}
