//! Python bindings. Structured results come back as plain dicts and lists.

use cyclegas_core::cli::config::parse;
use cyclegas_core::free_gas::{self, FreeGasParams};
use cyclegas_core::kernels;
use cyclegas_core::oracle::{self, FiniteVolume, McOptions, OracleModel};
use cyclegas_core::{Error, KernelSpec, ModelParams, ModifiedEnsembleParams, SolverOptions};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Round-trip a serializable value through JSON into native Python objects.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn kernel_from(obj: Option<&Bound<'_, PyAny>>) -> PyResult<KernelSpec> {
    obj.map_or(Ok(KernelSpec::None), from_py)
}

fn ensemble(q: usize, lam: f64, beta: f64) -> PyResult<ModifiedEnsembleParams> {
    ModifiedEnsembleParams::new(q, lam, beta).map_err(to_py_err)
}

/// Modified cycle pressure `π_{Q,λ}(y)`.
#[pyfunction]
#[pyo3(signature = (y, q=1, lam=0.0, beta=1.0))]
fn pi(y: f64, q: usize, lam: f64, beta: f64) -> PyResult<f64> {
    kernels::pi(y, &ensemble(q, lam, beta)?).map_err(to_py_err)
}

/// Mean occupation `π'_{Q,λ}(y)`.
#[pyfunction]
#[pyo3(signature = (y, q=1, lam=0.0, beta=1.0))]
fn pi_prime(y: f64, q: usize, lam: f64, beta: f64) -> PyResult<f64> {
    kernels::pi_prime(y, &ensemble(q, lam, beta)?).map_err(to_py_err)
}

/// Inverse of `pi_prime`.
#[pyfunction]
#[pyo3(signature = (t, q=1, lam=0.0, beta=1.0))]
fn y_of_t(t: f64, q: usize, lam: f64, beta: f64) -> PyResult<f64> {
    kernels::y_of_t(t, &ensemble(q, lam, beta)?).map_err(to_py_err)
}

/// Legendre transform `π*_{Q,λ}(t)`.
#[pyfunction]
#[pyo3(signature = (t, q=1, lam=0.0, beta=1.0))]
fn pi_star(t: f64, q: usize, lam: f64, beta: f64) -> PyResult<f64> {
    kernels::pi_star(t, &ensemble(q, lam, beta)?).map_err(to_py_err)
}

/// Critical density of the ideal gas and its error estimate.
#[pyfunction]
#[pyo3(signature = (beta=1.0, dimension=3))]
fn critical_density(beta: f64, dimension: usize) -> PyResult<(f64, f64)> {
    free_gas::critical_density(beta, dimension).map_err(to_py_err)
}

fn free_setup(alpha: f64, beta: f64, dimension: usize) -> PyResult<(FreeGasParams, cyclegas_core::RadialGrid)> {
    let fp = FreeGasParams::new(alpha, beta, dimension).map_err(to_py_err)?;
    let grid = free_gas::default_grid(dimension, beta).map_err(to_py_err)?;
    Ok((fp, grid))
}

/// Ideal-gas excited density at chemical potential `alpha <= 0`.
#[pyfunction]
#[pyo3(signature = (alpha, beta=1.0, dimension=3))]
fn free_density(alpha: f64, beta: f64, dimension: usize) -> PyResult<f64> {
    let (fp, grid) = free_setup(alpha, beta, dimension)?;
    free_gas::free_density(&fp, &grid).map_err(to_py_err)
}

/// Ideal-gas density carried by cycles of length at most `q`.
#[pyfunction]
#[pyo3(signature = (alpha, q, beta=1.0, dimension=3))]
fn free_rho_short(alpha: f64, q: usize, beta: f64, dimension: usize) -> PyResult<f64> {
    let (fp, grid) = free_setup(alpha, beta, dimension)?;
    free_gas::free_rho_short(&fp, q, &grid).map_err(to_py_err)
}

/// Mean-field model on its default radial grid.
#[pyclass(module = "cyclegas", frozen)]
struct MeanField {
    inner: cyclegas_core::MeanField,
}

#[pymethods]
impl MeanField {
    /// `kernel` is a dict such as `{"kind": "gaussian", "v0": 1.0, "c": 1.0}`.
    #[new]
    #[pyo3(signature = (beta, mu, mean_field_a, kernel=None, dimension=3, dispersion=1.0))]
    fn new(
        py: Python<'_>,
        beta: f64,
        mu: f64,
        mean_field_a: f64,
        kernel: Option<&Bound<'_, PyAny>>,
        dimension: usize,
        dispersion: f64,
    ) -> PyResult<Self> {
        let params = ModelParams {
            dimension,
            dispersion,
            ..ModelParams::new(beta, mu, mean_field_a, kernel_from(kernel)?)
        };
        let inner = py
            .detach(|| cyclegas_core::MeanField::with_default_grid(params))
            .map_err(to_py_err)?;
        Ok(MeanField { inner })
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.inner.grid.nodes.clone()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.grid.weights.clone()
    }

    /// Equilibrium of the modified ensemble at `mu` (default: the model's own).
    #[pyo3(signature = (q=1, lam=0.0, mu=None))]
    fn solve(&self, py: Python<'_>, q: usize, lam: f64, mu: Option<f64>) -> PyResult<Py<PyAny>> {
        let ens = ensemble(q, lam, self.inner.params.beta)?;
        let mu = mu.unwrap_or(self.inner.params.mu);
        let sol = py
            .detach(|| self.inner.solve_at(mu, &ens, &SolverOptions::default()))
            .map_err(to_py_err)?;
        to_py(py, &sol)
    }

    /// Largest chemical potential of the normal phase.
    fn onset(&self, py: Python<'_>) -> PyResult<f64> {
        let ens = ensemble(1, 0.0, self.inner.params.beta)?;
        py.detach(|| self.inner.onset(&ens, &SolverOptions::default()))
            .map(|(mu, _)| mu)
            .map_err(to_py_err)
    }

    /// Short-cycle densities over `qs` with the extrapolated long-cycle density.
    fn q_sweep(&self, py: Python<'_>, qs: Vec<usize>) -> PyResult<Py<PyAny>> {
        let report = py
            .detach(|| self.inner.q_sweep(&qs, &SolverOptions::default()))
            .map_err(to_py_err)?;
        to_py(py, &report)
    }

    /// Analytic λ-derivative of the pressure against central differences with step `h`.
    #[pyo3(signature = (qs, h=1e-5))]
    fn theorem_a(&self, py: Python<'_>, qs: Vec<usize>, h: f64) -> PyResult<Py<PyAny>> {
        let rows = py
            .detach(|| self.inner.theorem_a(&qs, h, &SolverOptions::default()))
            .map_err(to_py_err)?;
        to_py(py, &rows)
    }

    /// Window of chemical potentials below `ceiling` with the condensate at the origin.
    #[pyo3(signature = (ceiling, tol=1e-6))]
    fn condensed_window(&self, py: Python<'_>, ceiling: f64, tol: f64) -> PyResult<Py<PyAny>> {
        let report = py
            .detach(|| self.inner.condensed_window(ceiling, tol, &SolverOptions::default()))
            .map_err(to_py_err)?;
        to_py(py, &report)
    }
}

fn torus_instance(
    beta: f64,
    mu: f64,
    mean_field_a: f64,
    kernel: Option<&Bound<'_, PyAny>>,
    length: f64,
    modes: usize,
    dispersion: f64,
) -> PyResult<(FiniteVolume, OracleModel)> {
    let vol = FiniteVolume::torus_axis_modes(3, length, dispersion, modes).map_err(to_py_err)?;
    let model = OracleModel {
        beta,
        mu,
        mean_field_a,
        kernel: kernel_from(kernel)?,
    };
    Ok((vol, model))
}

/// Exact cycle distribution on the first `modes` modes of a three-dimensional torus.
#[pyfunction]
#[pyo3(signature = (beta, mu, mean_field_a, kernel=None, length=2.0, modes=3, dispersion=1.0, n_max=14))]
#[allow(clippy::too_many_arguments)]
fn cycle_distribution(
    py: Python<'_>,
    beta: f64,
    mu: f64,
    mean_field_a: f64,
    kernel: Option<&Bound<'_, PyAny>>,
    length: f64,
    modes: usize,
    dispersion: f64,
    n_max: usize,
) -> PyResult<Py<PyAny>> {
    let (vol, model) = torus_instance(beta, mu, mean_field_a, kernel, length, modes, dispersion)?;
    let ens = ensemble(1, 0.0, beta)?;
    let dist = py
        .detach(|| oracle::cycle_density(&vol, &model, &ens, n_max))
        .map_err(to_py_err)?;
    to_py(py, &dist)
}

/// Metropolis estimate of the same cycle distribution.
#[pyfunction]
#[pyo3(signature = (beta, mu, mean_field_a, kernel=None, length=2.0, modes=3, dispersion=1.0, n_max=14, steps=1_000_000, seed=1))]
#[allow(clippy::too_many_arguments)]
fn sample_cycles(
    py: Python<'_>,
    beta: f64,
    mu: f64,
    mean_field_a: f64,
    kernel: Option<&Bound<'_, PyAny>>,
    length: f64,
    modes: usize,
    dispersion: f64,
    n_max: usize,
    steps: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let (vol, model) = torus_instance(beta, mu, mean_field_a, kernel, length, modes, dispersion)?;
    let ens = ensemble(1, 0.0, beta)?;
    let opts = McOptions {
        steps,
        seed,
        n_max,
        ..McOptions::default()
    };
    let result = py
        .detach(|| oracle::mc_sample_cycles(&vol, &model, &ens, &opts))
        .map_err(to_py_err)?;
    to_py(py, &result)
}

/// Run a scenario given as TOML (or JSON) text and return its report without writing files.
#[pyfunction]
#[pyo3(signature = (text, json=false))]
fn run_scenario(py: Python<'_>, text: &str, json: bool) -> PyResult<Py<PyAny>> {
    let cfg = parse(text, json).and_then(|raw| raw.resolve()).map_err(to_py_err)?;
    let report = py
        .detach(|| cyclegas_core::cli::run::run(&cfg, None))
        .map_err(to_py_err)?;
    to_py(py, &report)
}

#[pymodule]
#[pyo3(name = "cyclegas")]
fn cyclegas_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(pi, m)?)?;
    m.add_function(wrap_pyfunction!(pi_prime, m)?)?;
    m.add_function(wrap_pyfunction!(y_of_t, m)?)?;
    m.add_function(wrap_pyfunction!(pi_star, m)?)?;
    m.add_function(wrap_pyfunction!(critical_density, m)?)?;
    m.add_function(wrap_pyfunction!(free_density, m)?)?;
    m.add_function(wrap_pyfunction!(free_rho_short, m)?)?;
    m.add_function(wrap_pyfunction!(cycle_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(sample_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_class::<MeanField>()?;
    m.add("SCHEMA_VERSION", cyclegas_core::cli::SCHEMA_VERSION)?;
    Ok(())
}
