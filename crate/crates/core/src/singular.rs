//! The constrained (complete-execution) problem as the large-penalty limit:
//! penalty ladders, monotonicity verification, blow-up envelope checks, and
//! convergence of the terminal inventory to zero.
//!
//! The limit object is never materialized: it is approximated by the
//! largest-penalty solution, with Cauchy-gap diagnostics across the ladder.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::abs_pow;
use crate::model::{CoefficientFields, ModelParams};
use crate::montecarlo::{run_twap, simulate_factor_paths};
use crate::ode_bounds::curve_envelope_constant;
use crate::pde::{solve_hjb_with, Grid, HjbSolution, SolverOptions};
use crate::strategy::{performance_criterion, simulate_execution};
use crate::threads;

/// Time-step count for a penalty: the terminal layer steepens like
/// `(A^(-1/phi) + T - t)^(-phi)`, so the grid refines proportionally to
/// `A^(1/phi) T / 10`, capped at 10^4 steps.
pub fn refined_nt(penalty: f64, phi: f64, horizon: f64, base_nt: usize, cap: usize) -> usize {
    let refined = (penalty.powf(1.0 / phi) * horizon / 10.0).ceil();
    let refined = if refined.is_finite() && refined > 0.0 {
        refined as usize
    } else {
        base_nt
    };
    refined.clamp(base_nt, cap)
}

/// Per-penalty outcome of the sweep.
#[derive(Debug, Clone)]
pub struct PenaltySweepEntry {
    pub penalty: f64,
    pub solution: HjbSolution,
    /// `z(0, y0)`.
    pub z_origin: f64,
    /// `E[|Q_T|^(1+phi)]` over the shared paths.
    pub mean_qt_pow: f64,
    /// Largest pathwise terminal inventory magnitude.
    pub max_abs_qt: f64,
    /// Mean realized criterion.
    pub mean_criterion: f64,
}

/// A ladder of solves on one shared grid with shared paths.
#[derive(Debug, Clone)]
pub struct PenaltySweep {
    pub entries: Vec<PenaltySweepEntry>,
    /// Mean realized TWAP criterion on the same paths (the feasibility
    /// benchmark `m`; penalty-free since TWAP finishes flat).
    pub twap_mean_criterion: f64,
    pub grid: Grid,
    pub params: ModelParams,
    /// Times at which pathwise inventories were sampled.
    pub sample_times: Vec<f64>,
    /// Worst nodewise violation of `z^A >= z^A'` (A < A') for t < T.
    pub z_monotonicity_violation: f64,
    /// Per entry, `n_paths x sample_times.len()` signed products `q0 Q_t`.
    q_signed: Vec<Vec<f64>>,
    /// Per entry, terminal inventory per path.
    q_terminal: Vec<Vec<f64>>,
    n_paths: usize,
}

impl PenaltySweep {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Signed product `q0 Q_t` for an entry at (path, sample index).
    pub fn q_signed(&self, entry: usize, path: usize, sample: usize) -> f64 {
        self.q_signed[entry][path * self.sample_times.len() + sample]
    }

    pub fn q_terminal(&self, entry: usize, path: usize) -> f64 {
        self.q_terminal[entry][path]
    }
}

/// Solve the equation per penalty on a shared refined grid, verify the
/// nodewise monotonicity in the penalty, and run the shared-path Monte Carlo
/// per value.
#[allow(clippy::too_many_arguments)]
pub fn penalty_sweep(
    params: &ModelParams,
    fields: &CoefficientFields,
    base_grid: &Grid,
    tolerance_rel: f64,
    max_iterations: usize,
    penalties: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Result<PenaltySweep> {
    if penalties.is_empty() {
        return Err(Error::usage("penalty sweep needs at least one value"));
    }
    if penalties.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::usage("penalty values must be strictly ascending"));
    }
    if penalties[0] <= 0.0 {
        return Err(Error::usage("penalties must be positive"));
    }
    let phi = params.impact_exponent;
    let nt = refined_nt(
        *penalties.last().unwrap(),
        phi,
        params.horizon,
        base_grid.nt,
        10_000,
    );
    let grid = Grid::new(
        base_grid.y_min,
        base_grid.y_max,
        base_grid.ny,
        nt,
        base_grid.horizon,
    )?;

    // One solve per penalty, concurrently.
    let solutions: Vec<HjbSolution> = threads::install(|| {
        penalties
            .par_iter()
            .map(|&penalty| {
                let mut p = *params;
                p.penalty = penalty;
                let options = SolverOptions {
                    tolerance: tolerance_rel * penalty,
                    max_iterations,
                    ..SolverOptions::for_penalty(penalty)
                };
                let sol = solve_hjb_with(&p, fields, &grid, &options)?;
                if !sol.converged {
                    return Err(Error::numeric(format!(
                        "solve for penalty {penalty} did not converge within {max_iterations} iterations (gap {:.3e})",
                        sol.gap
                    )));
                }
                Ok(sol)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    // Nodewise monotonicity in the penalty for t < T.
    let mut worst_violation: f64 = 0.0;
    for w in solutions.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let tol = 10.0 * tolerance_rel * (a.params.penalty.max(b.params.penalty));
        for i in 0..grid.nt {
            for j in 0..grid.ny {
                let violation = b.z.at(i, j) - a.z.at(i, j);
                worst_violation = worst_violation.max(violation);
                if violation > tol {
                    return Err(Error::numeric(format!(
                        "penalty monotonicity violated by {violation:.3e} at (t = {}, y = {}) between A = {} and A = {}",
                        grid.t(i),
                        grid.y(j),
                        a.params.penalty,
                        b.params.penalty
                    )));
                }
            }
        }
    }

    // Shared paths (common random numbers across the ladder).
    let times = grid.times();
    let batch = simulate_factor_paths(fields, params.initial_factor, &times, n_paths, master_seed)?;
    let sample_indices: Vec<usize> = (0..=10).map(|k| k * grid.nt / 10).collect();
    let sample_times: Vec<f64> = sample_indices.iter().map(|&i| grid.t(i)).collect();

    let mut entries = Vec::with_capacity(penalties.len());
    let mut q_signed = Vec::with_capacity(penalties.len());
    let mut q_terminal = Vec::with_capacity(penalties.len());
    for sol in solutions {
        let mut p = *params;
        p.penalty = sol.params.penalty;
        let per_path: Vec<(Vec<f64>, f64, f64)> = threads::install(|| {
            (0..n_paths)
                .into_par_iter()
                .map(|path| {
                    let traj = simulate_execution(
                        &sol,
                        &p,
                        fields,
                        &batch.times,
                        batch.factor_path(path),
                        batch.price_increments(path),
                    )?;
                    let samples: Vec<f64> = sample_indices
                        .iter()
                        .map(|&i| p.initial_inventory * traj.q_path[i])
                        .collect();
                    Ok((
                        samples,
                        traj.terminal_inventory(),
                        performance_criterion(&traj, &p),
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let mut signed = Vec::with_capacity(n_paths * sample_times.len());
        let mut terminals = Vec::with_capacity(n_paths);
        let mut sum_pow = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut sum_crit = 0.0;
        for (samples, q_t, crit) in &per_path {
            signed.extend_from_slice(samples);
            terminals.push(*q_t);
            sum_pow += abs_pow(*q_t, 1.0 + phi);
            max_abs = max_abs.max(q_t.abs());
            sum_crit += crit;
        }
        let z_origin = sol.z_at(0.0, params.initial_factor);
        entries.push(PenaltySweepEntry {
            penalty: p.penalty,
            z_origin,
            mean_qt_pow: sum_pow / n_paths as f64,
            max_abs_qt: max_abs,
            mean_criterion: sum_crit / n_paths as f64,
            solution: sol,
        });
        q_signed.push(signed);
        q_terminal.push(terminals);
    }

    let twap = run_twap(params, fields, &batch)?;
    let _ = &batch;
    Ok(PenaltySweep {
        entries,
        twap_mean_criterion: twap.mean_criterion,
        grid,
        params: *params,
        sample_times,
        z_monotonicity_violation: worst_violation,
        q_signed,
        q_terminal,
        n_paths,
    })
}

/// Margins of the largest-penalty solution against the blow-up envelope
/// evaluated in the strict-execution limit (`A^(-1/phi) -> 0`).
#[derive(Debug, Clone)]
pub struct EnvelopeReport {
    /// Envelope constant built from the bracketing curves.
    pub constant: f64,
    /// Per requested time: (t, min |z| C (T-t)^phi, min (C / (T-t)^phi) / |z|),
    /// both at least 1 when the solution sits inside the band.
    pub margins: Vec<(f64, f64, f64)>,
    pub all_inside: bool,
}

/// Check that the largest-penalty solution lies within the blow-up band
/// `1/(C (T-t)^phi) <= |z| <= C/(T-t)^phi` at every factor node at the given
/// times (all strictly below the horizon).
pub fn singular_envelope_check(sweep: &PenaltySweep, t_values: &[f64]) -> Result<EnvelopeReport> {
    let entry = sweep.entries.last().ok_or_else(|| Error::usage("empty sweep"))?;
    let phi = sweep.params.impact_exponent;
    let horizon = sweep.params.horizon;
    let shift = entry.penalty.powf(-1.0 / phi);
    for &t in t_values {
        if !(0.0..horizon).contains(&t) {
            return Err(Error::domain(format!("t = {t} must lie in [0, T)")));
        }
        if shift > 0.1 * (horizon - t) {
            return Err(Error::usage(format!(
                "penalty {} too small for the strict-limit envelope at t = {t}: A^(-1/phi) = {shift:.3e}",
                entry.penalty
            )));
        }
    }
    let c = curve_envelope_constant(&entry.solution.lower_curve)?
        .max(curve_envelope_constant(&entry.solution.upper_curve)?);

    let grid = &sweep.grid;
    let mut margins = Vec::with_capacity(t_values.len());
    let mut all_inside = true;
    for &t in t_values {
        let i = ((t / grid.dt()).round() as usize).min(grid.nt - 1);
        let decay = (horizon - grid.t(i)).powf(phi);
        let mut lower_margin = f64::INFINITY;
        let mut upper_margin = f64::INFINITY;
        for j in 0..grid.ny {
            let mag = entry.solution.z.at(i, j).abs();
            lower_margin = lower_margin.min(mag * c * decay);
            upper_margin = upper_margin.min(c / (decay * mag));
        }
        if lower_margin < 1.0 || upper_margin < 1.0 {
            all_inside = false;
        }
        margins.push((grid.t(i), lower_margin, upper_margin));
    }
    Ok(EnvelopeReport {
        constant: c,
        margins,
        all_inside,
    })
}

/// Verification of the limit behavior across the ladder.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// Worst pathwise violation of `q0 Q^A_t` decreasing in the penalty.
    pub worst_pathwise_violation: f64,
    pub pathwise_monotone: bool,
    /// `E[|Q_T|^(1+phi)] <= -m/A` at every penalty (m = TWAP benchmark).
    pub qt_pow_bounded: bool,
    /// `E[|Q_T|^(1+phi)]` nonincreasing along the ladder.
    pub qt_pow_decreasing: bool,
    /// Mean realized criterion at least the TWAP benchmark at every penalty.
    pub criteria_above_twap: bool,
    /// Mean realized criterion decreasing in the penalty (the value of the
    /// penalized problem shrinks toward the constrained optimum from above).
    pub criteria_decreasing: bool,
    /// Cauchy gaps `|z^{A_k+1}(0, y0) - z^{A_k}(0, y0)|` along the ladder.
    pub origin_gaps: Vec<f64>,
    pub details: Vec<String>,
}

impl ConvergenceReport {
    pub fn all_ok(&self) -> bool {
        self.pathwise_monotone
            && self.qt_pow_bounded
            && self.qt_pow_decreasing
            && self.criteria_above_twap
    }
}

/// Build the convergence report from a sweep run with common random numbers.
pub fn constrained_convergence_report(sweep: &PenaltySweep) -> ConvergenceReport {
    let n_entries = sweep.entries.len();
    let n_samples = sweep.sample_times.len();
    let q0 = sweep.params.initial_inventory;
    let tol = 1e-9 * q0.abs().max(1.0) * q0.abs().max(1.0);

    let mut worst: f64 = 0.0;
    for e in 1..n_entries {
        for path in 0..sweep.n_paths {
            for s in 0..n_samples {
                let prev = sweep.q_signed(e - 1, path, s);
                let next = sweep.q_signed(e, path, s);
                worst = worst.max(next - prev);
            }
        }
    }
    let pathwise_monotone = worst <= tol;

    let m = sweep.twap_mean_criterion;
    let mut qt_pow_bounded = true;
    let mut criteria_above_twap = true;
    let mut details = Vec::new();
    for entry in &sweep.entries {
        let bound = -m / entry.penalty;
        if entry.mean_qt_pow > bound {
            qt_pow_bounded = false;
            details.push(format!(
                "E|Q_T|^(1+phi) = {:.3e} exceeds -m/A = {:.3e} at A = {}",
                entry.mean_qt_pow, bound, entry.penalty
            ));
        }
        if entry.mean_criterion < m {
            criteria_above_twap = false;
            details.push(format!(
                "mean criterion {:.6} below the TWAP benchmark {:.6} at A = {}",
                entry.mean_criterion, m, entry.penalty
            ));
        }
    }
    let qt_pow_decreasing = sweep
        .entries
        .windows(2)
        .all(|w| w[1].mean_qt_pow <= w[0].mean_qt_pow * (1.0 + 1e-9) + 1e-300);
    let criteria_decreasing = sweep
        .entries
        .windows(2)
        .all(|w| w[1].mean_criterion <= w[0].mean_criterion + 1e-12);
    let origin_gaps = sweep
        .entries
        .windows(2)
        .map(|w| (w[1].z_origin - w[0].z_origin).abs())
        .collect();

    ConvergenceReport {
        worst_pathwise_violation: worst,
        pathwise_monotone,
        qt_pow_bounded,
        qt_pow_decreasing,
        criteria_above_twap,
        criteria_decreasing,
        origin_gaps,
        details,
    }
}
