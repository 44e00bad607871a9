//! Execution of a resolved scenario.

use serde_json::json;

use crate::error::{Error, Result};
use crate::free_gas::{self, FreeGasParams};
use crate::grid::RadialGrid;
use crate::kernels::ModifiedEnsembleParams;
use crate::meanfield::{EquilibriumSolution, MeanField, Regime};
use crate::oracle::mc_sample_cycles;
use crate::oracle::{self, distribution_from};

use super::config::{Mode, ScenarioConfig};
use super::report::{num, Check, Report, Table, SCHEMA_VERSION};

struct Outcome {
    results: serde_json::Value,
    checks: Vec<Check>,
    tables: Vec<Table>,
    summary: Vec<String>,
}

impl Outcome {
    fn new(results: serde_json::Value) -> Self {
        Outcome {
            results,
            checks: Vec::new(),
            tables: Vec::new(),
            summary: Vec::new(),
        }
    }

    fn line(&mut self, s: String) {
        self.summary.push(s);
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Serialize(e.to_string()))
}

/// Run a scenario and assemble its report. `timestamp` is omitted in reproducible runs.
pub fn run(cfg: &ScenarioConfig, timestamp: Option<u64>) -> Result<Report> {
    let mut out = match cfg.mode {
        Mode::Free => run_free(cfg)?,
        Mode::MeanField => run_meanfield(cfg)?,
        Mode::Sweep => run_sweep(cfg)?,
        Mode::TheoremA => run_theorem_a(cfg)?,
        Mode::Oracle => run_oracle(cfg)?,
        Mode::Mc => run_mc(cfg)?,
    };
    if cfg.output.dump_grid && !matches!(cfg.mode, Mode::Oracle | Mode::Mc) {
        let grid = cfg.grid.build()?;
        out.tables.push(grid_table(&grid));
        if cfg.mode != Mode::Free && !cfg.model.kernel.is_none() {
            let mf = MeanField::new(cfg.model.clone(), grid)?;
            out.tables.push(matrix_table(&mf));
        }
    }
    let all = out.checks.iter().all(|c| c.passed);
    let table_names = out
        .tables
        .iter()
        .map(|t| format!("{}_{}.csv", cfg.output.name, t.file_stem))
        .collect();
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        generated_unix_seconds: timestamp,
        mode: cfg.mode.name(),
        config: to_json(cfg)?,
        results: out.results,
        checks: out.checks,
        all_checks_passed: all,
        tables: table_names,
        table_data: out.tables,
        summary: out.summary,
    })
}

fn grid_table(grid: &RadialGrid) -> Table {
    let mut t = Table::new("grid", &["node", "weight"]);
    for (k, w) in grid.nodes.iter().zip(&grid.weights) {
        t.push(vec![num(*k), num(*w)]);
    }
    t
}

fn matrix_table(mf: &MeanField) -> Table {
    let n = mf.kernel.n;
    let header: Vec<String> = (0..n).map(|j| format!("col{j}")).collect();
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new("kernel_matrix", &refs);
    for i in 0..n {
        t.push((0..n).map(|j| num(mf.kernel.at(i, j))).collect());
    }
    t
}

fn nodes_table(mf: &MeanField, sol: &EquilibriumSolution) -> Table {
    let mut t = Table::new("nodes", &["k", "weight", "nu_e", "field"]);
    for i in 0..mf.len() {
        t.push(vec![
            num(mf.grid.nodes[i]),
            num(mf.grid.weights[i]),
            num(sol.measure.continuous[i]),
            num(sol.effective_field[i]),
        ]);
    }
    t
}

fn free_params(cfg: &ScenarioConfig) -> FreeGasParams {
    FreeGasParams {
        alpha: cfg.free_alpha,
        beta: cfg.model.beta,
        dimension: cfg.model.dimension,
        dispersion: cfg.model.dispersion,
    }
}

fn run_free(cfg: &ScenarioConfig) -> Result<Outcome> {
    let fp = free_params(cfg);
    let grid = cfg.grid.build()?;
    let pressure = free_gas::free_pressure(&fp, &grid)?;
    let density = free_gas::free_density(&fp, &grid)?;
    let error = free_gas::density_error_estimate(&fp, &grid)?;
    let mut table = Table::new("rho_short", &["q", "rho_short", "gap"]);
    let mut rows = Vec::new();
    for &q in &cfg.q_values {
        let r = free_gas::free_rho_short(&fp, q, &grid)?;
        let gap = free_gas::free_short_gap(&fp, q, &grid)?;
        table.push(vec![q.to_string(), num(r), num(gap)]);
        rows.push(json!({"q": q, "rho_short": r, "gap": gap}));
    }
    let mut out = Outcome::new(json!({
        "alpha": fp.alpha,
        "pressure": pressure,
        "density": density,
        "density_error_estimate": error,
        "critical": fp.alpha == 0.0,
        "grid_nodes": grid.len(),
        "grid_self_test_error": grid.gaussian_error(fp.beta * fp.dispersion),
        "rho_short": rows,
    }));
    out.line(format!(
        "free gas d={} beta={} alpha={}",
        fp.dimension, fp.beta, fp.alpha
    ));
    let label = if fp.alpha == 0.0 { "critical density" } else { "density" };
    out.line(format!("  {label} = {density:.10} (error estimate {error:.2e})"));
    out.line(format!("  pressure = {pressure:.10}"));
    for &q in &cfg.q_values {
        let r = free_gas::free_rho_short(&fp, q, &grid)?;
        out.line(format!("  rho_short(Q={q}) = {r:.10}"));
    }
    out.checks.push(Check::at_most(
        "density truncation error (relative)",
        error / density.abs().max(1e-300),
        cfg.checks.free_density_relative,
    ));
    out.tables.push(table);
    Ok(out)
}

fn mean_field(cfg: &ScenarioConfig) -> Result<MeanField> {
    MeanField::new(cfg.model.clone(), cfg.grid.build()?)
}

fn solution_lines(out: &mut Outcome, mf: &MeanField, sol: &EquilibriumSolution) -> Result<()> {
    let nu_e = sol.measure.excited_mass(&mf.grid)?;
    out.line(format!(
        "  regime = {}  rho_total = {:.10}  nu_c = {:.10}  nu_e = {:.10}",
        sol.regime,
        sol.nu_c() + nu_e,
        sol.nu_c(),
        nu_e
    ));
    out.line(format!(
        "  pressure = {:.12}  newton iterations = {}  residual = {:.2e}",
        sol.pressure, sol.iterations, sol.residual
    ));
    Ok(())
}

fn el_check(out: &mut Outcome, cfg: &ScenarioConfig, mf: &MeanField, sol: &EquilibriumSolution) -> Result<f64> {
    let (el, _) = mf.euler_lagrange_residual(sol)?;
    out.checks.push(Check::at_most(
        format!(
            "Euler-Lagrange residual (Q={}, lambda={})",
            sol.ensemble.q_cutoff, sol.ensemble.lambda
        ),
        el,
        cfg.checks.euler_lagrange,
    ));
    Ok(el)
}

fn sorted_cutoffs(qs: &[usize]) -> Vec<usize> {
    let mut v = qs.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn run_meanfield(cfg: &ScenarioConfig) -> Result<Outcome> {
    let mf = mean_field(cfg)?;
    let beta = cfg.model.beta;
    let base = mf.solve(&ModifiedEnsembleParams::standard(beta)?, &cfg.solver)?;
    let (onset, _) = mf.onset(&base.ensemble, &cfg.solver)?;
    let report = mf.sweep_solution(&base, &sorted_cutoffs(&cfg.q_values))?;
    let mut out = Outcome::new(serde_json::Value::Null);
    out.line(format!(
        "mean field mu={} a={} beta={}",
        cfg.model.mu, cfg.model.mean_field_a, beta
    ));
    out.line(format!("  normal-phase edge mu = {onset:.10}"));
    solution_lines(&mut out, &mf, &base)?;
    let base_el = el_check(&mut out, cfg, &mf, &base)?;

    let mut table = Table::new(
        "ensembles",
        &[
            "q",
            "lambda",
            "regime",
            "pressure",
            "rho_total",
            "nu_c",
            "nu_e",
            "iterations",
            "residual",
        ],
    );
    let mut rows = Vec::new();
    for &q in &cfg.q_values {
        for &lambda in &cfg.lambda_values {
            let sol = mf.solve(&ModifiedEnsembleParams::new(q, lambda, beta)?, &cfg.solver)?;
            if lambda != 0.0 {
                el_check(&mut out, cfg, &mf, &sol)?;
            }
            let nu_e = sol.measure.excited_mass(&mf.grid)?;
            table.push(vec![
                q.to_string(),
                num(lambda),
                sol.regime.to_string(),
                num(sol.pressure),
                num(sol.nu_c() + nu_e),
                num(sol.nu_c()),
                num(nu_e),
                sol.iterations.to_string(),
                num(sol.residual),
            ]);
            out.line(format!(
                "  Q={q} lambda={lambda}: pressure = {:.12} nu_c = {:.10} nu_e = {:.10}",
                sol.pressure,
                sol.nu_c(),
                nu_e
            ));
            rows.push(json!({
                "q": q, "lambda": lambda, "regime": sol.regime, "pressure": sol.pressure,
                "nu_c": sol.nu_c(), "nu_e": nu_e, "iterations": sol.iterations, "residual": sol.residual,
            }));
        }
    }
    out.results = json!({
        "onset_mu": onset,
        "euler_lagrange_residual": base_el,
        "solution": to_json(&base)?,
        "condensate_report": to_json(&report)?,
        "ensembles": rows,
    });
    out.tables.push(nodes_table(&mf, &base));
    out.tables.push(table);
    Ok(out)
}

fn run_sweep(cfg: &ScenarioConfig) -> Result<Outcome> {
    let mf = mean_field(cfg)?;
    let sol = mf.solve(&ModifiedEnsembleParams::standard(cfg.model.beta)?, &cfg.solver)?;
    let report = mf.sweep_solution(&sol, &cfg.q_values)?;
    let mut out = Outcome::new(serde_json::Value::Null);
    out.line(format!(
        "Q sweep mu={} a={} beta={}",
        cfg.model.mu, cfg.model.mean_field_a, cfg.model.beta
    ));
    solution_lines(&mut out, &mf, &sol)?;
    let el = el_check(&mut out, cfg, &mf, &sol)?;
    let mut table = Table::new("rho_short", &["q", "rho_short", "gap"]);
    for ((q, r), (_, g)) in report.rho_short_by_q.iter().zip(&report.gap_by_q) {
        table.push(vec![q.to_string(), num(*r), num(*g)]);
        out.line(format!("  rho_short(Q={q}) = {r:.12}  gap = {g:.3e}"));
    }
    out.line(format!(
        "  rho_long = {:.12} (unextrapolated {:.12})",
        report.rho_long, report.rho_long_unextrapolated
    ));
    match report.regime {
        Regime::Condensed => out.checks.push(Check::at_most(
            "|rho_long - nu_c| / nu_c",
            report.headline_gap(),
            cfg.checks.headline_relative,
        )),
        Regime::Normal => out.checks.push(Check::at_most(
            "rho_long in the normal phase",
            report.rho_long.abs(),
            cfg.checks.normal_rho_long,
        )),
    }
    out.results = json!({
        "euler_lagrange_residual": el,
        "solution": to_json(&sol)?,
        "condensate_report": to_json(&report)?,
    });
    out.tables.push(nodes_table(&mf, &sol));
    out.tables.push(table);
    Ok(out)
}

fn run_theorem_a(cfg: &ScenarioConfig) -> Result<Outcome> {
    let mf = mean_field(cfg)?;
    let sol = mf.solve(&ModifiedEnsembleParams::standard(cfg.model.beta)?, &cfg.solver)?;
    let rows = mf.theorem_a(&cfg.q_values, cfg.fd_step, &cfg.solver)?;
    let mut out = Outcome::new(serde_json::Value::Null);
    out.line(format!(
        "lambda-derivative check mu={} a={} beta={} h={}",
        cfg.model.mu, cfg.model.mean_field_a, cfg.model.beta, cfg.fd_step
    ));
    out.line(format!(
        "  note: the minus side of the central difference evaluates the ensemble at lambda = -{}",
        cfg.fd_step
    ));
    solution_lines(&mut out, &mf, &sol)?;
    let mut table = Table::new("theorem_a", &["q", "analytic", "finite_difference", "relative_gap"]);
    for r in &rows {
        table.push(vec![
            r.q.to_string(),
            num(r.analytic),
            num(r.finite_difference),
            num(r.relative_gap),
        ]);
        out.line(format!(
            "  Q={}: analytic = {:.12}  finite difference = {:.12}  relative gap = {:.2e}",
            r.q, r.analytic, r.finite_difference, r.relative_gap
        ));
        out.checks.push(Check::at_most(
            format!("analytic vs finite-difference derivative (Q={})", r.q),
            r.relative_gap,
            cfg.checks.theorem_a_relative,
        ));
    }
    out.results = json!({
        "regime": sol.regime,
        "nu_c": sol.nu_c(),
        "negative_lambda_step": -cfg.fd_step,
        "rows": to_json(&rows)?,
    });
    out.tables.push(table);
    Ok(out)
}

fn run_oracle(cfg: &ScenarioConfig) -> Result<Outcome> {
    let vol = cfg.oracle.volume(&cfg.model)?;
    let om = cfg.oracle.model(&cfg.model);
    let n_max = cfg.oracle.n_max;
    let ens = ModifiedEnsembleParams::standard(om.beta)?;
    let sum = oracle::xi_cycle_sum(&vol, &om, &ens, n_max)?;
    let (xi_occ, occ_tail) = oracle::xi_occupation_sum(&vol, &om, n_max)?;
    let dist = distribution_from(&sum, vol.volume);
    let deriv = oracle::finite_volume_lambda_derivative(&vol, &om, cfg.oracle.q_cutoff, n_max, cfg.oracle.fd_step)?;
    let agreement = (sum.xi - xi_occ).abs() / xi_occ.abs();
    let tail = sum.tail_bound.max(occ_tail);

    let mut out = Outcome::new(json!({
        "volume": vol.volume,
        "modes": vol.len(),
        "n_max": n_max,
        "xi_cycle_sum": sum.xi,
        "xi_occupation_sum": xi_occ,
        "relative_agreement": agreement,
        "tail_bound": tail,
        "configurations": sum.configurations,
        "distribution": to_json(&dist)?,
        "lambda_derivative": to_json(&deriv)?,
    }));
    out.line(format!(
        "finite-volume oracle: {} modes, volume {}, N_max {n_max}, mu {}",
        vol.len(),
        vol.volume,
        om.mu
    ));
    out.line(format!(
        "  Xi (cycles) = {:.15}  Xi (occupations) = {:.15}",
        sum.xi, xi_occ
    ));
    out.line(format!("  density = {:.12}  tail bound = {:.2e}", dist.rho_total, tail));
    out.line(format!(
        "  sum_(q<={}) q rho(q) = {:.12}  finite difference = {:.12}",
        deriv.q_cutoff, deriv.direct_sum, deriv.finite_difference
    ));
    let mut table = Table::new("cycles", &["q", "rho_q", "p_q"]);
    for ((q, r), (_, p)) in dist.rho_q.iter().zip(&dist.p_q) {
        table.push(vec![q.to_string(), num(*r), num(*p)]);
    }
    out.checks
        .push(Check::at_most("tail bound", tail, cfg.checks.oracle_tail));
    out.checks.push(Check::at_most(
        "cycle sum vs occupation sum (relative)",
        agreement,
        cfg.checks.oracle_agreement,
    ));
    out.checks.push(Check::at_most(
        "|sum_q p(q) - 1|",
        (dist.p_sum() - 1.0).abs(),
        tail + 1e-12,
    ));
    out.checks.push(Check::at_most(
        "direct sum vs finite difference of ln Xi (relative)",
        (deriv.direct_sum - deriv.finite_difference).abs() / deriv.direct_sum.abs().max(1e-300),
        cfg.checks.oracle_derivative,
    ));
    out.tables.push(table);
    Ok(out)
}

fn run_mc(cfg: &ScenarioConfig) -> Result<Outcome> {
    let vol = cfg.oracle.volume(&cfg.model)?;
    let om = cfg.oracle.model(&cfg.model);
    let ens = ModifiedEnsembleParams::standard(om.beta)?;
    let exact = oracle::cycle_density(&vol, &om, &ens, cfg.oracle.n_max)?;
    let mc = mc_sample_cycles(&vol, &om, &ens, &cfg.mc.options)?;
    let mut out = Outcome::new(serde_json::Value::Null);
    out.line(format!(
        "Monte Carlo: {} steps, seed {}, acceptance {:.3}",
        mc.steps, mc.seed, mc.acceptance_rate
    ));
    out.line(format!(
        "  density = {:.8} +- {:.2e} (exact {:.8})",
        mc.density, mc.density_stderr, exact.rho_total
    ));
    let mut table = Table::new("cycles", &["q", "rho_q", "p_q", "stderr", "p_q_enumeration", "z"]);
    let mut worst = 0.0f64;
    for (est, (_, p_exact)) in mc.p_q.iter().zip(&exact.p_q) {
        let z = (est.mean - p_exact) / est.stderr.max(1e-300);
        let rho = mc.rho_q[est.q - 1].mean;
        table.push(vec![
            est.q.to_string(),
            num(rho),
            num(est.mean),
            num(est.stderr),
            num(*p_exact),
            num(z),
        ]);
        if *p_exact >= cfg.mc.min_probability {
            worst = worst.max(z.abs());
            out.line(format!(
                "  q={}: p = {:.6} +- {:.1e}  exact {:.6}  z = {:+.2}",
                est.q, est.mean, est.stderr, p_exact, z
            ));
        }
    }
    out.checks.push(Check::at_most(
        "largest |z| of sampled p(q) against enumeration",
        worst,
        cfg.checks.mc_sigmas,
    ));
    out.results = json!({
        "sample": to_json(&mc)?,
        "enumeration": to_json(&exact)?,
        "max_abs_z": worst,
    });
    out.tables.push(table);
    Ok(out)
}
