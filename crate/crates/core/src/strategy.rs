//! Optimal trading trajectories along simulated factor paths, criterion
//! evaluation, and the terminal-inventory bound.
//!
//! The optimal rate in feedback form is `nu = -(-z/kappa)^(1/phi) Q`, which
//! integrates the inventory exactly as
//! `Q_{i+1} = Q_i exp(-(-z_i/kappa_i)^(1/phi) dt)` under a rate frozen per
//! step. The exponential form preserves the inventory sign unconditionally.

use crate::error::{Error, Result};
use crate::hamiltonian::abs_pow;
use crate::model::{CoefficientFields, ModelParams};
use crate::pde::HjbSolution;

/// Discretized paths of one simulated execution.
#[derive(Debug, Clone)]
pub struct ExecutionTrajectory {
    /// Ascending time grid.
    pub times: Vec<f64>,
    /// Factor path driving liquidity and volatility.
    pub y_path: Vec<f64>,
    /// Mid-price path.
    pub s_path: Vec<f64>,
    /// Trading rate at each node (shares/time).
    pub nu_path: Vec<f64>,
    /// Inventory at each node (shares).
    pub q_path: Vec<f64>,
    /// Cash account.
    pub x_path: Vec<f64>,
    /// Book value `X + Q S`.
    pub w_path: Vec<f64>,
    /// Running integral of `kappa |nu|^(1+phi) + gamma sigma^(1+phi) |Q|^(1+phi)`.
    pub realized_cost: Vec<f64>,
}

impl ExecutionTrajectory {
    pub fn terminal_cash(&self) -> f64 {
        *self.x_path.last().expect("non-empty trajectory")
    }

    pub fn terminal_inventory(&self) -> f64 {
        *self.q_path.last().expect("non-empty trajectory")
    }

    pub fn terminal_wealth(&self) -> f64 {
        *self.w_path.last().expect("non-empty trajectory")
    }
}

/// Bilinear interpolation of the solution factor; spatial queries outside the
/// grid clamp to the boundary (counted on the solution).
pub fn interpolate_z(solution: &HjbSolution, t: f64, y: f64) -> f64 {
    solution.z_at(t, y)
}

fn check_paths(times: &[f64], y_path: &[f64], increments: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::usage("trajectory grid needs at least two nodes"));
    }
    if y_path.len() != times.len() {
        return Err(Error::usage(format!(
            "factor path has {} samples, grid has {}",
            y_path.len(),
            times.len()
        )));
    }
    if increments.len() + 1 != times.len() {
        return Err(Error::usage(format!(
            "price increments have {} entries, expected {}",
            increments.len(),
            times.len() - 1
        )));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::usage("trajectory grid must be strictly ascending"));
    }
    Ok(())
}

/// Simulate the optimal execution along one factor path.
///
/// `price_increments` are the Brownian increments of the price driver
/// (already scaled by `sqrt(dt)`); the price updates as
/// `S_{i+1} = S_i + sigma(y_i) dB_i`. Cash accumulates the trapezoid of
/// `-S nu - kappa |nu|^(1+phi)`.
pub fn simulate_execution(
    solution: &HjbSolution,
    params: &ModelParams,
    fields: &CoefficientFields,
    times: &[f64],
    y_path: &[f64],
    price_increments: &[f64],
) -> Result<ExecutionTrajectory> {
    check_paths(times, y_path, price_increments)?;
    let phi = params.impact_exponent;
    let gamma = params.risk_aversion;
    let n = times.len();

    let mut s_path = vec![0.0; n];
    let mut nu_path = vec![0.0; n];
    let mut q_path = vec![0.0; n];
    let mut x_path = vec![0.0; n];
    let mut w_path = vec![0.0; n];
    let mut realized_cost = vec![0.0; n];

    q_path[0] = params.initial_inventory;
    s_path[0] = params.initial_price;
    x_path[0] = params.initial_cash;

    let mut prev_cash_rate = 0.0;
    let mut prev_cost_rate = 0.0;
    for i in 0..n {
        let y = y_path[i];
        let kappa = fields.kappa(y);
        let sigma = fields.sigma(y);
        // z < 0 strictly in theory; the clamp guards the pow at round-off.
        let z = interpolate_z(solution, times[i], y).min(-1e-30);
        let rate = abs_pow(-z / kappa, 1.0 / phi);
        let q = q_path[i];
        let nu = -rate * q;
        nu_path[i] = nu;
        w_path[i] = x_path[i] + q * s_path[i];

        let cash_rate = -s_path[i] * nu - kappa * abs_pow(nu, 1.0 + phi);
        let cost_rate = kappa * abs_pow(nu, 1.0 + phi) + gamma * abs_pow(sigma, 1.0 + phi) * abs_pow(q, 1.0 + phi);
        if i > 0 {
            let dt = times[i] - times[i - 1];
            x_path[i] = x_path[i - 1] + 0.5 * dt * (prev_cash_rate + cash_rate);
            realized_cost[i] = realized_cost[i - 1] + 0.5 * dt * (prev_cost_rate + cost_rate);
            w_path[i] = x_path[i] + q * s_path[i];
        }
        prev_cash_rate = cash_rate;
        prev_cost_rate = cost_rate;

        if i + 1 < n {
            let dt = times[i + 1] - times[i];
            q_path[i + 1] = q * (-rate * dt).exp();
            s_path[i + 1] = s_path[i] + sigma * price_increments[i];
        }
    }

    Ok(ExecutionTrajectory {
        times: times.to_vec(),
        y_path: y_path.to_vec(),
        s_path,
        nu_path,
        q_path,
        x_path,
        w_path,
        realized_cost,
    })
}

/// Constant-rate benchmark liquidating the initial inventory over the full
/// horizon: `nu = -q0 / T`, inventory linear from `q0` to exactly zero.
pub fn twap_trajectory(
    params: &ModelParams,
    fields: &CoefficientFields,
    times: &[f64],
    y_path: &[f64],
    price_increments: &[f64],
) -> Result<ExecutionTrajectory> {
    check_paths(times, y_path, price_increments)?;
    let phi = params.impact_exponent;
    let gamma = params.risk_aversion;
    let horizon = *times.last().unwrap();
    let q0 = params.initial_inventory;
    let nu = -q0 / horizon;
    let n = times.len();

    let mut s_path = vec![0.0; n];
    let mut q_path = vec![0.0; n];
    let mut x_path = vec![0.0; n];
    let mut w_path = vec![0.0; n];
    let mut realized_cost = vec![0.0; n];

    s_path[0] = params.initial_price;
    x_path[0] = params.initial_cash;

    let mut prev_cash_rate = 0.0;
    let mut prev_cost_rate = 0.0;
    for i in 0..n {
        let y = y_path[i];
        let kappa = fields.kappa(y);
        let sigma = fields.sigma(y);
        let q = q0 * (1.0 - times[i] / horizon);
        q_path[i] = q;
        let cash_rate = -s_path[i] * nu - kappa * abs_pow(nu, 1.0 + phi);
        let cost_rate = kappa * abs_pow(nu, 1.0 + phi) + gamma * abs_pow(sigma, 1.0 + phi) * abs_pow(q, 1.0 + phi);
        if i > 0 {
            let dt = times[i] - times[i - 1];
            x_path[i] = x_path[i - 1] + 0.5 * dt * (prev_cash_rate + cash_rate);
            realized_cost[i] = realized_cost[i - 1] + 0.5 * dt * (prev_cost_rate + cost_rate);
        }
        w_path[i] = x_path[i] + q * s_path[i];
        prev_cash_rate = cash_rate;
        prev_cost_rate = cost_rate;
        if i + 1 < n {
            s_path[i + 1] = s_path[i] + sigma * price_increments[i];
        }
    }

    Ok(ExecutionTrajectory {
        times: times.to_vec(),
        y_path: y_path.to_vec(),
        s_path,
        nu_path: vec![nu; n],
        q_path,
        x_path,
        w_path,
        realized_cost,
    })
}

/// Realized sample of the performance criterion:
/// `-integral(kappa |nu|^(1+phi) + gamma sigma^(1+phi) |Q|^(1+phi)) - A |Q_T|^(1+phi)`.
pub fn performance_criterion(traj: &ExecutionTrajectory, params: &ModelParams) -> f64 {
    let q_t = traj.terminal_inventory();
    -traj.realized_cost.last().expect("non-empty trajectory")
        - params.penalty * abs_pow(q_t, 1.0 + params.impact_exponent)
}

/// Outcome of checking the terminal-inventory bound at every sample.
#[derive(Debug, Clone)]
pub struct InventoryBoundReport {
    /// Smallest `bound - |Q|` over the trajectory; negative means a failure.
    pub worst_margin: f64,
    /// Number of samples violating the bound.
    pub failures: usize,
}

impl InventoryBoundReport {
    pub fn all_pass(&self) -> bool {
        self.failures == 0
    }
}

/// Check `|Q_t| <= |q0| ((T - t + A^(-1/phi)) / (T + A^(-1/phi)))^((ell/kappa_hi)^(1/phi))`
/// at every sample of the trajectory.
pub fn inventory_bound_check(
    traj: &ExecutionTrajectory,
    ell: f64,
    kappa_hi: f64,
    penalty: f64,
    phi: f64,
    q0: f64,
    horizon: f64,
) -> InventoryBoundReport {
    let shift = penalty.powf(-1.0 / phi);
    let exponent = (ell / kappa_hi).powf(1.0 / phi);
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for (t, q) in traj.times.iter().zip(&traj.q_path) {
        let bound = q0.abs() * (((horizon - t + shift) / (horizon + shift)).powf(exponent));
        let margin = bound - q.abs();
        if margin < worst {
            worst = margin;
        }
        if margin < 0.0 {
            failures += 1;
        }
    }
    InventoryBoundReport {
        worst_margin: worst,
        failures,
    }
}
