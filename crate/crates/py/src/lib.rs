//! Python bindings.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mfgsim_core::config::{load_config, load_config_file, to_canonical};
use mfgsim_core::equilibrium::{mf_trajectory, solve_equilibrium, EquilibriumSolution};
use mfgsim_core::model::GameConfig;
use mfgsim_core::sim::{self, PolicySpec, ProbeArm};
use mfgsim_core::{kernels, Error, Matrix};

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Ok(Matrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

fn policy(name: &str) -> PyResult<PolicySpec> {
    name.parse().map_err(py_err)
}

/// A game configuration.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: GameConfig,
}

#[pymethods]
impl PyConfig {
    /// The scalar reference game.
    #[staticmethod]
    fn model_a() -> Self {
        Self {
            inner: GameConfig::model_a(),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_config_file(path).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        load_config(text).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_json(&self) -> String {
        to_canonical(&self.inner)
    }

    #[getter]
    fn agents(&self) -> usize {
        self.inner.sim.agents
    }

    #[setter]
    fn set_agents(&mut self, v: usize) {
        self.inner.sim.agents = v;
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.sim.horizon
    }

    #[setter]
    fn set_horizon(&mut self, v: usize) {
        self.inner.sim.horizon = v;
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.scheduler.alpha
    }

    #[setter]
    fn set_alpha(&mut self, v: f64) {
        self.inner.scheduler.alpha = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.sim.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.sim.seed = v;
    }

    #[getter]
    fn runs(&self) -> usize {
        self.inner.sim.runs
    }

    #[setter]
    fn set_runs(&mut self, v: usize) {
        self.inner.sim.runs = v;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }
}

/// A solved mean-field equilibrium.
#[pyclass(name = "Equilibrium", from_py_object)]
#[derive(Clone)]
struct PyEquilibrium {
    inner: EquilibriumSolution,
}

#[pymethods]
impl PyEquilibrium {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        EquilibriumSolution::from_text(text)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_canonical()
    }

    /// Per-type gains as a list of dicts of row lists.
    fn gains<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .gains
            .iter()
            .map(|g| {
                let d = PyDict::new(py);
                d.set_item("K", to_rows(&g.k))?;
                d.set_item("Gamma", to_rows(&g.gamma))?;
                d.set_item("Pi", to_rows(&g.pi))?;
                d.set_item("H", to_rows(&g.h))?;
                d.set_item("Mtilde", to_rows(&g.mtilde))?;
                Ok(d)
            })
            .collect()
    }

    #[getter]
    fn lstar(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.lstar)
    }

    #[getter]
    fn zeta(&self) -> f64 {
        self.inner.diagnostics.zeta
    }

    #[getter]
    fn xi(&self) -> Vec<f64> {
        self.inner.diagnostics.xi_per_type.clone()
    }

    #[getter]
    fn guaranteed(&self) -> bool {
        self.inner.guaranteed
    }

    /// `X̄*_0 .. X̄*_T`.
    fn trajectory(&self, horizon: usize) -> Vec<Vec<f64>> {
        mf_trajectory(&self.inner, horizon)
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect()
    }
}

#[pyfunction]
#[pyo3(signature = (config, force = false))]
fn solve(config: &PyConfig, force: bool) -> PyResult<PyEquilibrium> {
    let cfg = &config.inner;
    solve_equilibrium(&cfg.distribution, &cfg.solver, force)
        .map(|inner| PyEquilibrium { inner })
        .map_err(py_err)
}

/// Runs one game and returns its metrics.
#[pyfunction]
#[pyo3(signature = (config, equilibrium, seed, policy = "equilibrium"))]
fn run_game<'py>(
    py: Python<'py>,
    config: &PyConfig,
    equilibrium: &PyEquilibrium,
    seed: u64,
    policy: &str,
) -> PyResult<Bound<'py, PyDict>> {
    config.inner.validate().map_err(py_err)?;
    let p = self::policy(policy)?;
    let (m, _) = py
        .detach(|| sim::run_game(&config.inner, &equilibrium.inner, seed, p, false))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("avg_cost", m.avg_cost_per_agent)?;
    d.set_item("eps_tn", m.eps_tn)?;
    d.set_item("tx_rate", m.tx_rate)?;
    d.set_item("est_err", m.est_err_trace)?;
    d.set_item("consensus_spread", m.consensus_spread)?;
    Ok(d)
}

/// Compares estimation-error and schedule traces under two policies.
#[pyfunction]
#[pyo3(signature = (config, equilibrium, seed, first = "equilibrium", second = "zero_control"))]
fn probe<'py>(
    py: Python<'py>,
    config: &PyConfig,
    equilibrium: &PyEquilibrium,
    seed: u64,
    first: &str,
    second: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let rep = sim::dual_effect_probe(
        &config.inner,
        &equilibrium.inner,
        ProbeArm {
            policy: policy(first)?,
            seed,
        },
        ProbeArm {
            policy: policy(second)?,
            seed,
        },
    )
    .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("pass", rep.pass)?;
    d.set_item("max_err_diff", rep.max_err_diff)?;
    d.set_item("gamma_match", rep.gamma_match)?;
    Ok(d)
}

/// Deviation gap of the first agent over the default policy family.
#[pyfunction]
#[pyo3(signature = (config, equilibrium, runs, seed = 1))]
fn nash_gap<'py>(
    py: Python<'py>,
    config: &PyConfig,
    equilibrium: &PyEquilibrium,
    runs: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    config.inner.validate().map_err(py_err)?;
    let family = sim::default_deviation_family();
    let rep = py
        .detach(|| sim::nash_gap(&config.inner, &equilibrium.inner, &family, runs, seed))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("gap", rep.gap)?;
    d.set_item("stderr", rep.stderr)?;
    d.set_item("eq_cost", rep.eq_cost)?;
    let members = PyDict::new(py);
    for m in &rep.members {
        members.set_item(m.policy.to_string(), (m.mean_diff, m.diff_stderr))?;
    }
    d.set_item("members", members)?;
    Ok(d)
}

#[pyfunction]
fn spectral_norm(m: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(kernels::spectral_norm(&from_rows(m)?))
}

#[pyfunction]
#[pyo3(signature = (a, b, q, r, tol = kernels::DEFAULT_TOL, max_iter = kernels::DEFAULT_MAX_ITER))]
fn solve_dare(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    tol: f64,
    max_iter: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let (k, _) = kernels::solve_dare(&from_rows(a)?, &from_rows(b)?, &from_rows(q)?, &from_rows(r)?, tol, max_iter)
        .map_err(py_err)?;
    Ok(to_rows(&k))
}

#[pymodule]
pub fn mfgsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyEquilibrium>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_game, m)?)?;
    m.add_function(wrap_pyfunction!(probe, m)?)?;
    m.add_function(wrap_pyfunction!(nash_gap, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_norm, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dare, m)?)?;
    Ok(())
}
