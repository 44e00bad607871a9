//! Scenario configuration: parsing, defaults and static validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_gas::FreeGasParams;
use crate::grid::{KernelSpec, RadialGrid};
use crate::kernels::ModifiedEnsembleParams;
use crate::meanfield::{MeanField, SolverOptions, DEFAULT_LAMBDA_STEP};
use crate::model::ModelParams;
use crate::oracle::{FiniteVolume, McOptions, OracleModel};

/// What a scenario computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "free")]
    Free,
    #[serde(rename = "meanfield")]
    MeanField,
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "mc")]
    Mc,
    #[serde(rename = "sweep")]
    Sweep,
    #[serde(rename = "theoremA")]
    TheoremA,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Free => "free",
            Mode::MeanField => "meanfield",
            Mode::Oracle => "oracle",
            Mode::Mc => "mc",
            Mode::Sweep => "sweep",
            Mode::TheoremA => "theoremA",
        }
    }

    fn needs_mean_field(&self) -> bool {
        matches!(self, Mode::MeanField | Mode::Sweep | Mode::TheoremA)
    }
}

/// The scenario file as written by the user. Every section except `model` is optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: Option<u64>,
    pub model: RawModel,
    #[serde(default)]
    pub ensemble: RawEnsemble,
    #[serde(default)]
    pub grid: RawGrid,
    #[serde(default)]
    pub solver: Option<SolverOptions>,
    #[serde(default)]
    pub free: RawFree,
    #[serde(default)]
    pub oracle: RawOracle,
    #[serde(default)]
    pub mc: RawMc,
    #[serde(default)]
    pub checks: RawChecks,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub beta: f64,
    pub mu: Option<f64>,
    pub mean_field_a: Option<f64>,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub dimension: Option<usize>,
    pub dispersion: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEnsemble {
    pub q: Option<Vec<usize>>,
    pub lambda: Option<Vec<f64>>,
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub k_max: Option<f64>,
    pub panels: Option<usize>,
    pub order: Option<usize>,
    pub k_min: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFree {
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOracle {
    pub length: Option<f64>,
    pub modes: Option<usize>,
    pub n_max: Option<usize>,
    pub q_cutoff: Option<usize>,
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMc {
    pub steps: Option<usize>,
    pub burn_in: Option<usize>,
    pub batches: Option<usize>,
    pub min_probability: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChecks {
    pub free_density_relative: Option<f64>,
    pub theorem_a_relative: Option<f64>,
    pub headline_relative: Option<f64>,
    pub normal_rho_long: Option<f64>,
    pub euler_lagrange: Option<f64>,
    pub oracle_agreement: Option<f64>,
    pub oracle_tail: Option<f64>,
    pub oracle_derivative: Option<f64>,
    pub mc_sigmas: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub name: Option<String>,
    pub dir: Option<String>,
    pub dump_grid: Option<bool>,
}

/// Grid settings after defaults are applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub dimension: usize,
    pub k_max: f64,
    pub panels: usize,
    pub order: usize,
    pub k_min: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<RadialGrid> {
        RadialGrid::graded(self.dimension, self.k_max, self.panels, self.order, self.k_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConfig {
    pub length: f64,
    pub modes: usize,
    pub n_max: usize,
    pub q_cutoff: usize,
    pub fd_step: f64,
}

impl OracleConfig {
    pub fn volume(&self, model: &ModelParams) -> Result<FiniteVolume> {
        FiniteVolume::torus_axis_modes(model.dimension, self.length, model.dispersion, self.modes)
    }

    pub fn model(&self, model: &ModelParams) -> OracleModel {
        OracleModel {
            beta: model.beta,
            mu: model.mu,
            mean_field_a: model.mean_field_a,
            kernel: model.kernel.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub options: McOptions,
    /// Only cycle lengths whose exact probability reaches this value are compared.
    pub min_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checks {
    pub free_density_relative: f64,
    pub theorem_a_relative: f64,
    pub headline_relative: f64,
    pub normal_rho_long: f64,
    pub euler_lagrange: f64,
    pub oracle_agreement: f64,
    pub oracle_tail: f64,
    pub oracle_derivative: f64,
    pub mc_sigmas: f64,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            free_density_relative: 1e-5,
            theorem_a_relative: 1e-4,
            headline_relative: 1e-3,
            normal_rho_long: 1e-8,
            euler_lagrange: 1e-9,
            oracle_agreement: 1e-8,
            oracle_tail: 1e-8,
            oracle_derivative: 1e-6,
            mc_sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub name: String,
    pub dir: Option<String>,
    pub dump_grid: bool,
}

/// A fully resolved scenario: every default filled in and every static invariant checked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub seed: u64,
    pub model: ModelParams,
    pub q_values: Vec<usize>,
    pub lambda_values: Vec<f64>,
    pub fd_step: f64,
    pub grid: GridConfig,
    pub solver: SolverOptions,
    pub free_alpha: f64,
    pub oracle: OracleConfig,
    pub mc: McConfig,
    pub checks: Checks,
    pub output: OutputConfig,
}

/// Read and resolve a scenario file. Files ending in `.json` are JSON, everything else TOML.
pub fn load(path: &Path) -> Result<ScenarioConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse(&text, is_json)?.resolve()
}

/// Parse scenario text without resolving it.
pub fn parse(text: &str, json: bool) -> Result<RawConfig> {
    if text.trim().is_empty() {
        return Err(Error::Config("config file is empty".into()));
    }
    if json {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("JSON: {e}")))
    } else {
        toml::from_str(text).map_err(|e| Error::Config(format!("TOML: {e}")))
    }
}

fn config_err(field: &str, e: Error) -> Error {
    Error::Config(format!("{field}: {e}"))
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Config(format!("{field} must be positive and finite, got {v}")))
    }
}

impl RawConfig {
    pub fn resolve(self) -> Result<ScenarioConfig> {
        let mode = self.mode;
        let m = &self.model;
        let dimension = m.dimension.unwrap_or(3);
        let mu = match (mode, m.mu) {
            (_, Some(mu)) => mu,
            (Mode::Free, None) => 0.0,
            (_, None) => return Err(Error::Config(format!("model.mu is required in mode {}", mode.name()))),
        };
        let mean_field_a = match (mode, m.mean_field_a) {
            (_, Some(a)) => a,
            (Mode::Free, None) | (Mode::Oracle, None) | (Mode::Mc, None) => 0.0,
            (_, None) => {
                return Err(Error::Config(format!(
                    "model.mean_field_a is required in mode {}",
                    mode.name()
                )))
            }
        };
        let model = ModelParams {
            beta: m.beta,
            mu,
            mean_field_a,
            kernel: m.kernel.clone(),
            dimension,
            dispersion: m.dispersion.unwrap_or(1.0),
        };
        positive("model.beta", model.beta)?;
        positive("model.dispersion", model.dispersion)?;
        if !mu.is_finite() {
            return Err(Error::Config(format!("model.mu must be finite, got {mu}")));
        }
        if dimension < 1 {
            return Err(Error::Config("model.dimension must be at least 1".into()));
        }
        model.kernel.validate().map_err(|e| config_err("model.kernel", e))?;
        if mode.needs_mean_field() {
            if !(mean_field_a.is_finite() && mean_field_a > 0.0) {
                return Err(Error::Config(format!(
                    "model.mean_field_a = {mean_field_a}: the mean-field strength a must be strictly positive"
                )));
            }
            model.validate().map_err(|e| config_err("model", e))?;
        }

        let q_values = self.ensemble.q.clone().unwrap_or_else(|| match mode {
            Mode::TheoremA => vec![4, 32, 256],
            Mode::Sweep => (0..=12).map(|i| 1usize << i).collect(),
            Mode::Free => (3..=9).map(|i| 1usize << i).collect(),
            _ => vec![1],
        });
        if q_values.is_empty() || q_values.contains(&0) {
            return Err(Error::Config(
                "ensemble.q must be a non-empty list of positive cutoffs".into(),
            ));
        }
        if mode == Mode::Sweep && q_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "ensemble.q must be strictly increasing in sweep mode".into(),
            ));
        }
        let lambda_values = self.ensemble.lambda.clone().unwrap_or_else(|| vec![0.0]);
        if lambda_values.is_empty() {
            return Err(Error::Config("ensemble.lambda must not be empty".into()));
        }
        for &l in &lambda_values {
            ModifiedEnsembleParams::new(1, l, model.beta).map_err(|e| config_err("ensemble.lambda", e))?;
        }
        let fd_step = positive("ensemble.fd_step", self.ensemble.fd_step.unwrap_or(DEFAULT_LAMBDA_STEP))?;
        if fd_step > 0.5 {
            return Err(Error::Config("ensemble.fd_step must not exceed 0.5".into()));
        }

        let grid = self.resolve_grid(&model)?;
        let solver = self.solver.unwrap_or_default();
        positive("solver.tolerance", solver.tolerance)?;
        if solver.max_iterations == 0 {
            return Err(Error::Config("solver.max_iterations must be at least 1".into()));
        }

        let free_alpha = self.free.alpha.unwrap_or(0.0);
        if mode == Mode::Free {
            FreeGasParams {
                alpha: free_alpha,
                beta: model.beta,
                dimension,
                dispersion: model.dispersion,
            }
            .validate()
            .map_err(|e| config_err("free.alpha", e))?;
            if free_alpha == 0.0 && dimension <= 2 {
                return Err(Error::Config(format!(
                    "free.alpha = 0 in d = {dimension}: the excited density diverges at zero chemical potential for d <= 2"
                )));
            }
        }

        let oracle = OracleConfig {
            length: self.oracle.length.unwrap_or(2.0),
            modes: self.oracle.modes.unwrap_or(3),
            n_max: self.oracle.n_max.unwrap_or(14),
            q_cutoff: self.oracle.q_cutoff.unwrap_or(3),
            fd_step: self.oracle.fd_step.unwrap_or(1e-4),
        };
        let seed = self.seed.unwrap_or(1);
        let mc = McConfig {
            options: McOptions {
                steps: self.mc.steps.unwrap_or(4_000_000),
                burn_in: self.mc.burn_in.unwrap_or(100_000),
                batches: self.mc.batches.unwrap_or(50),
                seed,
                n_max: oracle.n_max,
                q_max: 0,
            },
            min_probability: self.mc.min_probability.unwrap_or(1e-3),
        };
        if matches!(mode, Mode::Oracle | Mode::Mc) {
            let vol = oracle.volume(&model).map_err(|e| config_err("oracle", e))?;
            vol.validate().map_err(|e| config_err("oracle", e))?;
            oracle.model(&model).validate().map_err(|e| config_err("model", e))?;
            if oracle.n_max < 1 || oracle.q_cutoff < 1 {
                return Err(Error::Config(
                    "oracle.n_max and oracle.q_cutoff must be at least 1".into(),
                ));
            }
            if !(oracle.fd_step > 0.0 && oracle.fd_step <= 0.5) {
                return Err(Error::Config("oracle.fd_step must lie in (0, 0.5]".into()));
            }
            if mode == Mode::Mc && (mc.options.batches < 2 || mc.options.steps < mc.options.batches) {
                return Err(Error::Config("mc needs batches >= 2 and steps >= batches".into()));
            }
        }

        let d = Checks::default();
        let c = &self.checks;
        let checks = Checks {
            free_density_relative: c.free_density_relative.unwrap_or(d.free_density_relative),
            theorem_a_relative: c.theorem_a_relative.unwrap_or(d.theorem_a_relative),
            headline_relative: c.headline_relative.unwrap_or(d.headline_relative),
            normal_rho_long: c.normal_rho_long.unwrap_or(d.normal_rho_long),
            euler_lagrange: c.euler_lagrange.unwrap_or(d.euler_lagrange),
            oracle_agreement: c.oracle_agreement.unwrap_or(d.oracle_agreement),
            oracle_tail: c.oracle_tail.unwrap_or(d.oracle_tail),
            oracle_derivative: c.oracle_derivative.unwrap_or(d.oracle_derivative),
            mc_sigmas: c.mc_sigmas.unwrap_or(d.mc_sigmas),
        };

        let name = self.output.name.clone().unwrap_or_else(|| "report".into());
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(Error::Config("output.name must be a plain file stem".into()));
        }
        Ok(ScenarioConfig {
            mode,
            seed,
            model,
            q_values,
            lambda_values,
            fd_step,
            grid,
            solver,
            free_alpha,
            oracle,
            mc,
            checks,
            output: OutputConfig {
                name,
                dir: self.output.dir.clone(),
                dump_grid: self.output.dump_grid.unwrap_or(false),
            },
        })
    }

    fn resolve_grid(&self, model: &ModelParams) -> Result<GridConfig> {
        let g = &self.grid;
        // Free mode integrates e^{βα}-weighted Bose factors, so its cutoff follows β only.
        let default_k_max = if self.mode == Mode::Free {
            (40.0 / (model.beta * model.dispersion)).sqrt()
        } else {
            MeanField::default_grid(model)
                .map(|grid| grid.k_max)
                .unwrap_or_else(|_| (40.0 / (model.beta * model.dispersion)).sqrt())
        };
        let k_max = positive("grid.k_max", g.k_max.unwrap_or(default_k_max))?;
        let (panels, order, k_min) = if self.mode == Mode::Free {
            (16, 16, 1e-6)
        } else {
            (16, 12, 1e-4 * k_max.min(1.0))
        };
        let cfg = GridConfig {
            dimension: model.dimension,
            k_max,
            panels: g.panels.unwrap_or(panels),
            order: g.order.unwrap_or(order),
            k_min: positive("grid.k_min", g.k_min.unwrap_or(k_min))?,
        };
        if cfg.k_min >= cfg.k_max {
            return Err(Error::Config("grid.k_min must be below grid.k_max".into()));
        }
        cfg.build().map_err(|e| config_err("grid", e))?;
        Ok(cfg)
    }
}
