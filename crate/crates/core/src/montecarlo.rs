//! Factor-path simulation, experiment harness, summary statistics, and
//! comparative statics with common random numbers.
//!
//! Reproducibility: each path draws from its own counter-based substream
//! keyed by `(master_seed, path index, purpose)`, so results are bit-stable
//! under any degree of parallelism; aggregation always reduces in path
//! order.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CoefficientFields, ModelParams};
use crate::pde::{solve_hjb_with, Grid, HjbSolution, SolverOptions};
use crate::strategy::{performance_criterion, simulate_execution, ExecutionTrajectory};
use crate::threads;

const FACTOR_STREAM: u64 = 0;
const PRICE_STREAM: u64 = 1;

fn path_rng(master_seed: u64, path: usize, purpose: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(2 * path as u64 + purpose);
    rng
}

/// A batch of factor paths with their driving increments.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub master_seed: u64,
    /// `n_paths x times.len()` factor values, row-major.
    y: Vec<f64>,
    /// `n_paths x (times.len() - 1)` scaled factor increments.
    dw: Vec<f64>,
    /// `n_paths x (times.len() - 1)` scaled price increments.
    db: Vec<f64>,
}

impl PathBatch {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn factor_path(&self, path: usize) -> &[f64] {
        let n = self.times.len();
        &self.y[path * n..(path + 1) * n]
    }

    pub fn factor_increments(&self, path: usize) -> &[f64] {
        let m = self.steps();
        &self.dw[path * m..(path + 1) * m]
    }

    pub fn price_increments(&self, path: usize) -> &[f64] {
        let m = self.steps();
        &self.db[path * m..(path + 1) * m]
    }

    /// Batch-wide sanity check: increment means stay within 5 standard errors
    /// of zero and variances within 5 standard errors of dt.
    pub fn check_increments(&self) -> Result<()> {
        let m = self.steps();
        let count = (self.n_paths * m) as f64;
        for (name, data) in [("factor", &self.dw), ("price", &self.db)] {
            let dt = (self.times[1] - self.times[0]).max(f64::MIN_POSITIVE);
            let mean = data.iter().sum::<f64>() / count;
            let var = data.iter().map(|v| v * v).sum::<f64>() / count - mean * mean;
            let mean_se = (dt / count).sqrt();
            let var_se = dt * (2.0 / count).sqrt();
            if mean.abs() > 5.0 * mean_se {
                return Err(Error::numeric(format!(
                    "{name} increment mean {mean:e} exceeds 5 standard errors ({mean_se:e})"
                )));
            }
            if (var - dt).abs() > 5.0 * var_se {
                return Err(Error::numeric(format!(
                    "{name} increment variance {var:e} deviates from dt = {dt:e} beyond 5 standard errors"
                )));
            }
        }
        Ok(())
    }
}

/// Euler-Maruyama factor paths: `y_{i+1} = y_i + alpha(y_i) dt + beta(y_i) dW_i`.
pub fn simulate_factor_paths(
    fields: &CoefficientFields,
    y0: f64,
    times: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Result<PathBatch> {
    if n_paths == 0 {
        return Err(Error::usage("need at least one path"));
    }
    if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::usage("path grid must be strictly ascending with >= 2 nodes"));
    }
    if !y0.is_finite() {
        return Err(Error::config(format!("initial factor must be finite, got {y0}")));
    }
    let n = times.len();
    let m = n - 1;
    let dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();

    let mut y = vec![0.0; n_paths * n];
    let mut dw = vec![0.0; n_paths * m];
    let mut db = vec![0.0; n_paths * m];

    threads::install(|| {
        y.par_chunks_mut(n)
            .zip(dw.par_chunks_mut(m))
            .zip(db.par_chunks_mut(m))
            .enumerate()
            .for_each(|(path, ((y_row, dw_row), db_row))| {
                let mut rng_w = path_rng(master_seed, path, FACTOR_STREAM);
                let mut rng_b = path_rng(master_seed, path, PRICE_STREAM);
                y_row[0] = y0;
                for i in 0..m {
                    let dt = dts[i];
                    let zw: f64 = rng_w.sample(StandardNormal);
                    let zb: f64 = rng_b.sample(StandardNormal);
                    dw_row[i] = zw * dt.sqrt();
                    db_row[i] = zb * dt.sqrt();
                    let yi = y_row[i];
                    y_row[i + 1] = yi + fields.alpha(yi) * dt + fields.beta(yi) * dw_row[i];
                }
            });
    });

    Ok(PathBatch {
        times: times.to_vec(),
        n_paths,
        master_seed,
        y,
        dw,
        db,
    })
}

/// One histogram bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Summary of one terminal quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantitySummary {
    pub mean: f64,
    pub std: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
    pub histogram: Vec<HistogramBin>,
}

/// Type-7 (linear interpolation) quantile of a sorted sample.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

/// Freedman-Diaconis histogram; degenerate samples collapse to one bin.
fn histogram(sorted: &[f64]) -> Vec<HistogramBin> {
    let n = sorted.len();
    let min = sorted[0];
    let max = sorted[n - 1];
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let width = 2.0 * iqr / (n as f64).cbrt();
    if !(width > 0.0) || max == min {
        return vec![HistogramBin {
            left: min,
            right: max,
            count: n,
        }];
    }
    let bins = (((max - min) / width).ceil() as usize).clamp(1, 10_000);
    let step = (max - min) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            left: min + step * k as f64,
            right: min + step * (k + 1) as f64,
            count: 0,
        })
        .collect();
    for &v in sorted {
        let mut idx = ((v - min) / step) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        out[idx].count += 1;
    }
    out
}

fn summarize(values: &[f64]) -> QuantitySummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    QuantitySummary {
        mean,
        std: var.sqrt(),
        q05: quantile_sorted(&sorted, 0.05),
        q25: quantile_sorted(&sorted, 0.25),
        q75: quantile_sorted(&sorted, 0.75),
        q95: quantile_sorted(&sorted, 0.95),
        histogram: histogram(&sorted),
    }
}

/// Terminal statistics of one experiment.
#[derive(Debug, Clone)]
pub struct SummaryStats {
    pub cash: QuantitySummary,
    pub inventory: QuantitySummary,
    pub wealth: QuantitySummary,
}

/// Terminal state of one path.
#[derive(Debug, Clone, Copy)]
pub struct TerminalRecord {
    pub path: usize,
    pub cash: f64,
    pub inventory: f64,
    pub wealth: f64,
    pub criterion: f64,
}

/// Result of running the optimal strategy over a batch.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub stats: SummaryStats,
    pub records: Vec<TerminalRecord>,
    pub mean_criterion: f64,
    /// Monte Carlo standard error of the mean criterion.
    pub criterion_se: f64,
}

/// Simulate the optimal execution on every path of the batch and aggregate
/// terminal cash, inventory, and wealth.
pub fn run_experiment(
    params: &ModelParams,
    fields: &CoefficientFields,
    solution: &HjbSolution,
    batch: &PathBatch,
) -> Result<ExperimentResult> {
    let records: Vec<TerminalRecord> = threads::install(|| {
        (0..batch.n_paths)
            .into_par_iter()
            .map(|path| {
                let traj = simulate_execution(
                    solution,
                    params,
                    fields,
                    &batch.times,
                    batch.factor_path(path),
                    batch.price_increments(path),
                )?;
                Ok(TerminalRecord {
                    path,
                    cash: traj.terminal_cash(),
                    inventory: traj.terminal_inventory(),
                    wealth: traj.terminal_wealth(),
                    criterion: performance_criterion(&traj, params),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(aggregate(records))
}

fn aggregate(records: Vec<TerminalRecord>) -> ExperimentResult {
    let cash: Vec<f64> = records.iter().map(|r| r.cash).collect();
    let inventory: Vec<f64> = records.iter().map(|r| r.inventory).collect();
    let wealth: Vec<f64> = records.iter().map(|r| r.wealth).collect();
    let criteria: Vec<f64> = records.iter().map(|r| r.criterion).collect();
    let crit = summarize(&criteria);
    let se = crit.std / (records.len() as f64).sqrt();
    ExperimentResult {
        stats: SummaryStats {
            cash: summarize(&cash),
            inventory: summarize(&inventory),
            wealth: summarize(&wealth),
        },
        records,
        mean_criterion: crit.mean,
        criterion_se: se,
    }
}

/// Run the TWAP benchmark over the same batch.
pub fn run_twap(
    params: &ModelParams,
    fields: &CoefficientFields,
    batch: &PathBatch,
) -> Result<ExperimentResult> {
    let records: Vec<TerminalRecord> = threads::install(|| {
        (0..batch.n_paths)
            .into_par_iter()
            .map(|path| {
                let traj = crate::strategy::twap_trajectory(
                    params,
                    fields,
                    &batch.times,
                    batch.factor_path(path),
                    batch.price_increments(path),
                )?;
                Ok(TerminalRecord {
                    path,
                    cash: traj.terminal_cash(),
                    inventory: traj.terminal_inventory(),
                    wealth: traj.terminal_wealth(),
                    criterion: performance_criterion(&traj, params),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(aggregate(records))
}

/// Which scalar parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Penalty,
    ImpactExponent,
    RiskAversion,
}

impl SweepParameter {
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "penalty" | "a" => Ok(SweepParameter::Penalty),
            "impact_exponent" | "phi" => Ok(SweepParameter::ImpactExponent),
            "risk_aversion" | "gamma" => Ok(SweepParameter::RiskAversion),
            other => Err(Error::usage(format!(
                "unknown sweep parameter '{other}' (expected penalty, impact_exponent, or risk_aversion)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Penalty => "penalty",
            SweepParameter::ImpactExponent => "impact_exponent",
            SweepParameter::RiskAversion => "risk_aversion",
        }
    }

    pub fn apply(&self, params: &ModelParams, value: f64) -> ModelParams {
        let mut p = *params;
        match self {
            SweepParameter::Penalty => p.penalty = value,
            SweepParameter::ImpactExponent => p.impact_exponent = value,
            SweepParameter::RiskAversion => p.risk_aversion = value,
        }
        p
    }
}

/// One entry of a comparative-statics sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub value: f64,
    pub converged: bool,
    pub z_origin: f64,
    /// Statistics; absent when the solve did not converge.
    pub result: Option<ExperimentResult>,
    /// One illustrative trajectory on the designated path.
    pub exhibit: Option<ExecutionTrajectory>,
}

/// Re-solve and re-simulate per parameter value, reusing the same path batch
/// (common random numbers). Non-convergence flags the entry; other values
/// proceed.
#[allow(clippy::too_many_arguments)]
pub fn comparative_statics(
    params: &ModelParams,
    fields: &CoefficientFields,
    grid: &Grid,
    tolerance_rel: f64,
    max_iterations: usize,
    vary: SweepParameter,
    values: &[f64],
    batch: &PathBatch,
    exhibit_path: usize,
) -> Result<Vec<SweepEntry>> {
    if values.is_empty() {
        return Err(Error::usage("sweep needs at least one value"));
    }
    if exhibit_path >= batch.n_paths {
        return Err(Error::usage(format!(
            "exhibit path {exhibit_path} outside batch of {} paths",
            batch.n_paths
        )));
    }
    let mut entries = Vec::with_capacity(values.len());
    for &value in values {
        let p = vary.apply(params, value);
        p.check().map_err(|e| {
            Error::config(format!("sweep value {value} for {}: {e}", vary.name()))
        })?;
        let options = SolverOptions {
            tolerance: tolerance_rel * p.penalty,
            max_iterations,
            ..SolverOptions::for_penalty(p.penalty)
        };
        let solution = solve_hjb_with(&p, fields, grid, &options)?;
        let z_origin = solution.z_at(0.0, p.initial_factor);
        if !solution.converged {
            entries.push(SweepEntry {
                value,
                converged: false,
                z_origin,
                result: None,
                exhibit: None,
            });
            continue;
        }
        let result = run_experiment(&p, fields, &solution, batch)?;
        let exhibit = simulate_execution(
            &solution,
            &p,
            fields,
            &batch.times,
            batch.factor_path(exhibit_path),
            batch.price_increments(exhibit_path),
        )?;
        entries.push(SweepEntry {
            value,
            converged: true,
            z_origin,
            result: Some(result),
            exhibit: Some(exhibit),
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientBounds, CoefficientSpec};
    use crate::pde::build_grid;

    fn uniform_times(horizon: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| horizon * i as f64 / n as f64).collect()
    }

    #[test]
    fn degenerate_dynamics_keep_factor_constant() {
        let fields = CoefficientFields::new(
            CoefficientSpec::Constant(1.0),
            CoefficientSpec::Constant(1.0),
            CoefficientSpec::Constant(0.0),
            CoefficientSpec::Constant(0.0),
            CoefficientBounds::new(1.0, 1.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let times = uniform_times(1.0, 50);
        let batch = simulate_factor_paths(&fields, 0.7, &times, 8, 1).unwrap();
        for p in 0..8 {
            for v in batch.factor_path(p) {
                assert_eq!(*v, 0.7);
            }
        }
    }

    #[test]
    fn deterministic_drift_matches_exponential_decay() {
        // beta = 0, alpha = -5y, y0 = 1: y(t) = e^(-5t) within O(dt).
        let fields = CoefficientFields::new(
            CoefficientSpec::Constant(1.0),
            CoefficientSpec::Constant(1.0),
            CoefficientSpec::Affine {
                intercept: 0.0,
                slope: -5.0,
            },
            CoefficientSpec::Constant(0.0),
            CoefficientBounds::new(1.0, 1.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let n = 2000;
        let times = uniform_times(1.0, n);
        let batch = simulate_factor_paths(&fields, 1.0, &times, 1, 7).unwrap();
        let path = batch.factor_path(0);
        for (i, t) in times.iter().enumerate().step_by(100) {
            let exact = (-5.0 * t).exp();
            assert!(
                (path[i] - exact).abs() < 5.0 * 5.0 / n as f64,
                "t = {t}: {} vs {exact}",
                path[i]
            );
        }
    }

    #[test]
    fn ou_moments_at_stationarity() {
        // alpha = -5y, beta = 1: stationary mean 0 and variance 1/10, within
        // five standard errors over 10^4 paths (finer dt keeps the Euler bias
        // well inside the band).
        let fields = CoefficientFields::reference();
        let n = 2000;
        let times = uniform_times(5.0, n);
        let n_paths = 10_000;
        let batch = simulate_factor_paths(&fields, 0.0, &times, n_paths, 99).unwrap();
        batch.check_increments().unwrap();
        let finals: Vec<f64> = (0..n_paths)
            .map(|p| *batch.factor_path(p).last().unwrap())
            .collect();
        let mean = finals.iter().sum::<f64>() / n_paths as f64;
        let var = finals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n_paths - 1) as f64;
        let var_target = 0.1;
        let mean_se = (var_target / n_paths as f64).sqrt();
        let var_se = var_target * (2.0 / n_paths as f64).sqrt();
        assert!(mean.abs() < 5.0 * mean_se, "mean {mean}, se {mean_se}");
        assert!(
            (var - var_target).abs() < 5.0 * var_se,
            "variance {var}, target {var_target}, se {var_se}"
        );
    }

    #[test]
    fn batches_are_bit_reproducible_and_order_independent() {
        let fields = CoefficientFields::reference();
        let times = uniform_times(5.0, 100);
        let a = simulate_factor_paths(&fields, 0.0, &times, 64, 1234).unwrap();
        let b = simulate_factor_paths(&fields, 0.0, &times, 64, 1234).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.dw, b.dw);
        assert_eq!(a.db, b.db);
        // A batch with more paths reproduces the shared prefix exactly.
        let c = simulate_factor_paths(&fields, 0.0, &times, 96, 1234).unwrap();
        for p in 0..64 {
            assert_eq!(a.factor_path(p), c.factor_path(p));
            assert_eq!(a.price_increments(p), c.price_increments(p));
        }
    }

    #[test]
    fn quantiles_and_histogram_are_sane() {
        let values: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let s = summarize(&values);
        assert!((s.mean - 50.0).abs() < 1e-12);
        assert!((s.q05 - 5.0).abs() < 1e-12);
        assert!((s.q25 - 25.0).abs() < 1e-12);
        assert!((s.q75 - 75.0).abs() < 1e-12);
        assert!((s.q95 - 95.0).abs() < 1e-12);
        assert!(s.q05 <= s.q25 && s.q25 <= s.q75 && s.q75 <= s.q95);
        let total: usize = s.histogram.iter().map(|b| b.count).sum();
        assert_eq!(total, values.len());
        // Degenerate sample collapses to one bin.
        let s = summarize(&vec![3.5; 10]);
        assert_eq!(s.histogram.len(), 1);
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn experiment_with_zero_inventory_degenerates() {
        let mut params = ModelParams::new(1.0, 1.0, 1.0, 2.0, 0.0, 10.0, 3.25, 0.0).unwrap();
        params.initial_inventory = 0.0;
        let fields = CoefficientFields::reference();
        let grid = build_grid(-5.0, 5.0, 21, 50, 1.0).unwrap();
        let sol = crate::pde::solve_hjb(&params, &fields, &grid, 2e-5, 100).unwrap();
        let batch = simulate_factor_paths(&fields, 0.0, &grid.times(), 32, 5).unwrap();
        let result = run_experiment(&params, &fields, &sol, &batch).unwrap();
        assert_eq!(result.stats.cash.mean, 3.25);
        assert_eq!(result.stats.inventory.mean, 0.0);
        assert_eq!(result.stats.wealth.mean, 3.25);
        assert_eq!(result.stats.wealth.std, 0.0);
    }

    #[test]
    fn single_value_sweep_equals_run_experiment() {
        let params = ModelParams::new(1.0, 0.75, 0.1, 2.0, 5.0, 20.0, 0.0, 0.0).unwrap();
        let fields = CoefficientFields::reference();
        let grid = build_grid(-5.0, 5.0, 21, 100, 1.0).unwrap();
        let batch = simulate_factor_paths(&fields, 0.0, &grid.times(), 50, 11).unwrap();
        let entries = comparative_statics(
            &params,
            &fields,
            &grid,
            1e-6,
            100,
            SweepParameter::RiskAversion,
            &[0.1],
            &batch,
            0,
        )
        .unwrap();
        assert_eq!(entries.len(), 1);
        let direct_sol = crate::pde::solve_hjb(&params, &fields, &grid, 1e-6 * 2.0, 100).unwrap();
        let direct = run_experiment(&params, &fields, &direct_sol, &batch).unwrap();
        let entry = entries[0].result.as_ref().unwrap();
        assert_eq!(entry.stats.cash.mean, direct.stats.cash.mean);
        assert_eq!(entry.stats.inventory.mean, direct.stats.inventory.mean);
        assert_eq!(entry.mean_criterion, direct.mean_criterion);
    }
}
