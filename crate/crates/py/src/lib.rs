//! Python bindings exposing the solver, simulator, and experiment pipelines.
//!
//! The module mirrors the library surface: build a `Config` (the reference
//! preset by default), then `solve`, `simulate`, or `sweep_penalties` with
//! it. Heavy loops run in Rust with the GIL released.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hjb_exec_core::config::RunConfig;
use hjb_exec_core::error::Error;
use hjb_exec_core::hamiltonian;
use hjb_exec_core::model::validate as validate_model;
use hjb_exec_core::montecarlo::{run_experiment, run_twap, simulate_factor_paths};
use hjb_exec_core::ode_bounds::{subsolution_curve, supersolution_curve};
use hjb_exec_core::pde::{solve_hjb_with, HjbSolution};
use hjb_exec_core::singular::penalty_sweep;
use hjb_exec_core::strategy::simulate_execution;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Parse(_) | Error::Config(_) | Error::Usage(_) | Error::Domain(_) => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Run configuration; starts from the reference preset.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[new]
    fn new() -> Self {
        Self {
            inner: RunConfig::default(),
        }
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        RunConfig::load(std::path::Path::new(path))
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        RunConfig::from_toml(text)
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    // Scalar knobs used by the comparative experiments.
    #[getter]
    fn get_penalty(&self) -> f64 {
        self.inner.model.penalty
    }
    #[setter]
    fn set_penalty(&mut self, v: f64) {
        self.inner.model.penalty = v;
    }
    #[getter]
    fn get_impact_exponent(&self) -> f64 {
        self.inner.model.impact_exponent
    }
    #[setter]
    fn set_impact_exponent(&mut self, v: f64) {
        self.inner.model.impact_exponent = v;
    }
    #[getter]
    fn get_risk_aversion(&self) -> f64 {
        self.inner.model.risk_aversion
    }
    #[setter]
    fn set_risk_aversion(&mut self, v: f64) {
        self.inner.model.risk_aversion = v;
    }
    #[getter]
    fn get_horizon(&self) -> f64 {
        self.inner.model.horizon
    }
    #[setter]
    fn set_horizon(&mut self, v: f64) {
        self.inner.model.horizon = v;
    }
    #[getter]
    fn get_initial_inventory(&self) -> f64 {
        self.inner.model.initial_inventory
    }
    #[setter]
    fn set_initial_inventory(&mut self, v: f64) {
        self.inner.model.initial_inventory = v;
    }

    fn set_grid(&mut self, ny: usize, nt: usize) {
        self.inner.grid.ny = ny;
        self.inner.grid.nt = nt;
    }

    fn set_paths(&mut self, n_paths: usize, master_seed: u64) {
        self.inner.montecarlo.n_paths = n_paths;
        self.inner.montecarlo.master_seed = master_seed;
    }

    fn set_solver(&mut self, tolerance_rel: f64, max_iterations: usize) {
        self.inner.solver.tolerance_rel = tolerance_rel;
        self.inner.solver.max_iterations = max_iterations;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(penalty={}, impact_exponent={}, risk_aversion={}, grid={}x{}, paths={})",
            self.inner.model.penalty,
            self.inner.model.impact_exponent,
            self.inner.model.risk_aversion,
            self.inner.grid.ny,
            self.inner.grid.nt,
            self.inner.montecarlo.n_paths,
        )
    }
}

/// Converged solve of the value-factor equation.
#[pyclass]
struct Solution {
    inner: HjbSolution,
}

#[pymethods]
impl Solution {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.inner.gap
    }

    /// Bilinear interpolation of z at (t, y).
    fn z_at(&self, t: f64, y: f64) -> f64 {
        self.inner.z_at(t, y)
    }

    fn times(&self) -> Vec<f64> {
        self.inner.grid.times()
    }

    fn ys(&self) -> Vec<f64> {
        self.inner.grid.ys()
    }

    /// Full grid as nested lists, one row per time slice.
    fn z_grid(&self) -> Vec<Vec<f64>> {
        let grid = &self.inner.grid;
        (0..=grid.nt)
            .map(|i| self.inner.z.slice(i).to_vec())
            .collect()
    }

    fn gap_history(&self) -> Vec<f64> {
        self.inner.gap_history.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(converged={}, iterations={}, gap={:.3e})",
            self.inner.converged, self.inner.iterations, self.inner.gap
        )
    }
}

/// Terminal statistics of a simulated experiment.
#[pyclass]
struct Experiment {
    cash_mean: f64,
    cash_std: f64,
    inventory_mean: f64,
    inventory_std: f64,
    wealth_mean: f64,
    wealth_std: f64,
    mean_criterion: f64,
    criterion_se: f64,
    twap_mean_criterion: f64,
}

#[pymethods]
impl Experiment {
    #[getter]
    fn cash_mean(&self) -> f64 {
        self.cash_mean
    }
    #[getter]
    fn cash_std(&self) -> f64 {
        self.cash_std
    }
    #[getter]
    fn inventory_mean(&self) -> f64 {
        self.inventory_mean
    }
    #[getter]
    fn inventory_std(&self) -> f64 {
        self.inventory_std
    }
    #[getter]
    fn wealth_mean(&self) -> f64 {
        self.wealth_mean
    }
    #[getter]
    fn wealth_std(&self) -> f64 {
        self.wealth_std
    }
    #[getter]
    fn mean_criterion(&self) -> f64 {
        self.mean_criterion
    }
    #[getter]
    fn criterion_se(&self) -> f64 {
        self.criterion_se
    }
    #[getter]
    fn twap_mean_criterion(&self) -> f64 {
        self.twap_mean_criterion
    }

    fn __repr__(&self) -> String {
        format!(
            "Experiment(X_T={:.3}+/-{:.3}, Q_T={:.4}+/-{:.4}, w_T={:.3}+/-{:.3}, J={:.4})",
            self.cash_mean,
            self.cash_std,
            self.inventory_mean,
            self.inventory_std,
            self.wealth_mean,
            self.wealth_std,
            self.mean_criterion,
        )
    }
}

/// `H(p) = phi |p|^(1 + 1/phi)`.
#[pyfunction]
fn hamiltonian_h(p: f64, phi: f64) -> PyResult<f64> {
    hamiltonian::hamiltonian_h(p, phi).map_err(to_py_err)
}

/// `H~(p) = phi (|p| / (1 + phi))^(1 + 1/phi)`.
#[pyfunction]
fn hamiltonian_htilde(p: f64, phi: f64) -> PyResult<f64> {
    hamiltonian::hamiltonian_htilde(p, phi).map_err(to_py_err)
}

/// Optimal feedback rate `-(-z/kappa)^(1/phi) q`.
#[pyfunction]
fn feedback_rate(z: f64, kappa: f64, q: f64, phi: f64) -> PyResult<f64> {
    hamiltonian::feedback_rate(z, kappa, q, phi).map_err(to_py_err)
}

/// Solve the value-factor equation for the given configuration.
#[pyfunction]
fn solve(py: Python<'_>, config: &Config) -> PyResult<Solution> {
    let cfg = config.inner.clone();
    py.detach(move || {
        let params = cfg.model_params()?;
        let fields = cfg.coefficient_fields()?;
        let grid = cfg.solve_grid()?;
        solve_hjb_with(&params, &fields, &grid, &cfg.solver_options())
    })
    .map(|inner| Solution { inner })
    .map_err(to_py_err)
}

/// Check the coefficient bounds and penalty threshold; returns
/// `(bounds_ok, penalty_ok, threshold, messages)`.
#[pyfunction]
fn validate(config: &Config) -> PyResult<(bool, bool, f64, Vec<String>)> {
    let cfg = &config.inner;
    let params = cfg.model_params().map_err(to_py_err)?;
    let fields = cfg.coefficient_fields().map_err(to_py_err)?;
    let report = validate_model(
        &params,
        &fields,
        cfg.grid.y_min,
        cfg.grid.y_max,
        cfg.grid.ny.max(101),
    )
    .map_err(to_py_err)?;
    Ok((
        report.h2_bounds_ok,
        report.h3_ok,
        report.h3_threshold,
        report.messages,
    ))
}

/// Bounding curves on the solve grid: `(times, lower, upper)`.
#[pyfunction]
fn bounding_curves(config: &Config) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let cfg = &config.inner;
    let params = cfg.model_params().map_err(to_py_err)?;
    let fields = cfg.coefficient_fields().map_err(to_py_err)?;
    let grid = cfg.solve_grid().map_err(to_py_err)?;
    let times = grid.times();
    let lower = subsolution_curve(
        params.risk_aversion,
        params.impact_exponent,
        &fields.bounds,
        params.penalty,
        &times,
    )
    .map_err(to_py_err)?;
    let upper = supersolution_curve(
        params.risk_aversion,
        params.impact_exponent,
        &fields.bounds,
        params.penalty,
        &times,
    )
    .map_err(to_py_err)?;
    Ok((times, lower.values, upper.values))
}

/// Solve and run the Monte Carlo experiment with the configured paths.
#[pyfunction]
fn simulate(py: Python<'_>, config: &Config) -> PyResult<Experiment> {
    let cfg = config.inner.clone();
    py.detach(move || {
        let params = cfg.model_params()?;
        let fields = cfg.coefficient_fields()?;
        let grid = cfg.solve_grid()?;
        let solution = solve_hjb_with(&params, &fields, &grid, &cfg.solver_options())?;
        if !solution.converged {
            return Err(Error::Numeric(format!(
                "solve did not converge (gap {:.3e})",
                solution.gap
            )));
        }
        let batch = simulate_factor_paths(
            &fields,
            params.initial_factor,
            &grid.times(),
            cfg.montecarlo.n_paths,
            cfg.montecarlo.master_seed,
        )?;
        let result = run_experiment(&params, &fields, &solution, &batch)?;
        let twap = run_twap(&params, &fields, &batch)?;
        Ok(Experiment {
            cash_mean: result.stats.cash.mean,
            cash_std: result.stats.cash.std,
            inventory_mean: result.stats.inventory.mean,
            inventory_std: result.stats.inventory.std,
            wealth_mean: result.stats.wealth.mean,
            wealth_std: result.stats.wealth.std,
            mean_criterion: result.mean_criterion,
            criterion_se: result.criterion_se,
            twap_mean_criterion: twap.mean_criterion,
        })
    })
    .map_err(to_py_err)
}

/// One optimal trajectory on a freshly drawn path; returns
/// `(times, y, S, nu, Q, X, w)`.
#[pyfunction]
fn sample_trajectory(
    py: Python<'_>,
    config: &Config,
    path_index: usize,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let cfg = config.inner.clone();
    py.detach(move || {
        let params = cfg.model_params()?;
        let fields = cfg.coefficient_fields()?;
        let grid = cfg.solve_grid()?;
        let solution = solve_hjb_with(&params, &fields, &grid, &cfg.solver_options())?;
        let batch = simulate_factor_paths(
            &fields,
            params.initial_factor,
            &grid.times(),
            path_index + 1,
            cfg.montecarlo.master_seed,
        )?;
        let traj = simulate_execution(
            &solution,
            &params,
            &fields,
            &batch.times,
            batch.factor_path(path_index),
            batch.price_increments(path_index),
        )?;
        Ok((
            traj.times,
            traj.y_path,
            traj.s_path,
            traj.nu_path,
            traj.q_path,
            traj.x_path,
            traj.w_path,
        ))
    })
    .map_err(to_py_err)
}

/// Penalty ladder toward the complete-execution limit; returns rows of
/// `(A, z_at_origin, mean_QT_pow, max_QT, mean_J)`.
#[pyfunction]
fn sweep_penalties(
    py: Python<'_>,
    config: &Config,
    penalties: Vec<f64>,
) -> PyResult<Vec<(f64, f64, f64, f64, f64)>> {
    let cfg = config.inner.clone();
    py.detach(move || {
        let params = cfg.model_params()?;
        let fields = cfg.coefficient_fields()?;
        let grid = cfg.solve_grid()?;
        let sweep = penalty_sweep(
            &params,
            &fields,
            &grid,
            cfg.solver.tolerance_rel,
            cfg.solver.max_iterations,
            &penalties,
            cfg.montecarlo.n_paths,
            cfg.montecarlo.master_seed,
        )?;
        Ok(sweep
            .entries
            .iter()
            .map(|e| (e.penalty, e.z_origin, e.mean_qt_pow, e.max_abs_qt, e.mean_criterion))
            .collect())
    })
    .map_err(to_py_err)
}

#[pymodule]
fn hjb_exec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Config>()?;
    m.add_class::<Solution>()?;
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(hamiltonian_h, m)?)?;
    m.add_function(wrap_pyfunction!(hamiltonian_htilde, m)?)?;
    m.add_function(wrap_pyfunction!(feedback_rate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(bounding_curves, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sample_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_penalties, m)?)?;
    Ok(())
}
