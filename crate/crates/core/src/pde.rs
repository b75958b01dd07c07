//! Monotone bracketing solver for the reduced semilinear HJB equation
//!
//! `dz/dt + (1/2) beta^2 z_yy + alpha z_y + phi kappa^(-1/phi) |z|^(1+1/phi)
//!  - gamma sigma^(1+phi) = 0`, `z(T, .) = -A`,
//!
//! on a uniform 1-D factor grid. Each iteration freezes the coefficient
//! `c = -(phi+1)(|zlow|/kappa)^(1/phi)` and solves a linear parabolic step
//! backward in time; two iterate sequences seeded from the lower and upper
//! bounding curves squeeze the solution from both sides.
//!
//! The time stepping is Crank-Nicolson with two stabilizations that keep the
//! discrete step map order-preserving, so the bracketing stays monotone at
//! the discrete level and not just in the continuum limit:
//!
//! - the drift is discretized centrally where the cell Peclet number allows
//!   and upwinded where it does not, which keeps the implicit matrix an
//!   M-matrix;
//! - each node uses the weight `theta = max(1/2, 1 - 1/(dt D))` between the
//!   implicit and explicit halves, where `D` collects the node's diffusion,
//!   upwind-drift and reaction scales. Wherever plain Crank-Nicolson already
//!   has a nonnegative explicit half (`dt D <= 2`) this is exactly
//!   Crank-Nicolson; only nodes with a stiff frozen coefficient are pushed
//!   toward the implicit end.
//!
//! The reaction term of the Picard forcing is evaluated with the same
//! `theta`-weights as the implicit reaction, so the two cancel identically at
//! a fixed point: the converged solution does not depend on the frozen
//! coefficient, and the iterate seeds can be made exactly consistent with the
//! discretization by running the matching scalar recursion.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::hamiltonian::abs_pow;
use crate::model::{CoefficientBounds, CoefficientFields, ModelParams};
use crate::ode_bounds::{BoundingCurve, CurveKind};

/// Uniform time-space grid: `ny` nodes on `[y_min, y_max]`, `nt` steps on
/// `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
    pub nt: usize,
    pub horizon: f64,
}

impl Grid {
    pub fn new(y_min: f64, y_max: f64, ny: usize, nt: usize, horizon: f64) -> Result<Self> {
        if !y_min.is_finite() || !y_max.is_finite() || y_min >= y_max {
            return Err(Error::config(format!(
                "grid bounds must satisfy y_min < y_max, got [{y_min}, {y_max}]"
            )));
        }
        if ny < 3 {
            return Err(Error::config(format!("grid needs at least 3 space nodes, got {ny}")));
        }
        if nt < 1 {
            return Err(Error::config(format!("grid needs at least 1 time step, got {nt}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::config(format!("grid horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            y_min,
            y_max,
            ny,
            nt,
            horizon,
        })
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y_min + self.dy() * j as f64
    }

    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.nt as f64
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.y(j)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.nt).map(|i| self.t(i)).collect()
    }
}

/// Build and validate a grid.
pub fn build_grid(y_min: f64, y_max: f64, ny: usize, nt: usize, horizon: f64) -> Result<Grid> {
    Grid::new(y_min, y_max, ny, nt, horizon)
}

/// A scalar field sampled on the grid: `(nt + 1) x ny`, row per time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    nt: usize,
    ny: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, fill: f64) -> Self {
        Self {
            nt: grid.nt,
            ny: grid.ny,
            data: vec![fill; (grid.nt + 1) * grid.ny],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut field = Self::new(grid, 0.0);
        for i in 0..=grid.nt {
            let t = grid.t(i);
            for j in 0..grid.ny {
                field.data[i * grid.ny + j] = f(t, grid.y(j));
            }
        }
        field
    }

    #[inline]
    pub fn nt(&self) -> usize {
        self.nt
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ny + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ny + j] = v;
    }

    #[inline]
    pub fn slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.ny..(i + 1) * self.ny]
    }

    #[inline]
    pub fn slice_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ny..(i + 1) * self.ny]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Sup-norm distance to another field of the same shape.
    pub fn sup_distance(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn same_shape(&self, grid: &Grid) -> bool {
        self.nt == grid.nt && self.ny == grid.ny
    }
}

/// The frozen linearization weight `c = -(phi+1)(|zlow(t)|/kappa(y))^(1/phi)`.
#[derive(Debug, Clone)]
pub struct FrozenCoefficient {
    pub values: Field,
}

/// Build the frozen coefficient from the lower bounding curve.
pub fn freeze_coefficient(
    subsolution: &BoundingCurve,
    fields: &CoefficientFields,
    grid: &Grid,
    phi: f64,
) -> Result<FrozenCoefficient> {
    if subsolution.horizon() < grid.horizon * (1.0 - 1e-12) {
        return Err(Error::usage(format!(
            "bounding curve spans [0, {}], grid needs [0, {}]",
            subsolution.horizon(),
            grid.horizon
        )));
    }
    let samples: Vec<f64> = (0..=grid.nt).map(|i| subsolution.value_at(grid.t(i))).collect();
    freeze_from_slices(&samples, fields, grid, phi)
}

fn freeze_from_slices(
    floor: &[f64],
    fields: &CoefficientFields,
    grid: &Grid,
    phi: f64,
) -> Result<FrozenCoefficient> {
    let kappas: Vec<f64> = (0..grid.ny).map(|j| fields.kappa(grid.y(j))).collect();
    let mut values = Field::new(grid, 0.0);
    for i in 0..=grid.nt {
        let zlow = floor[i];
        for j in 0..grid.ny {
            let c = -(phi + 1.0) * abs_pow(zlow.abs() / kappas[j], 1.0 / phi);
            if !c.is_finite() || c > 0.0 {
                return Err(Error::numeric(format!(
                    "frozen coefficient must be finite and nonpositive, got {c} at (i={i}, j={j})"
                )));
            }
            values.set(i, j, c);
        }
    }
    Ok(FrozenCoefficient { values })
}

/// Refreeze nodewise from the current lower iterate: the domination
/// requirement on the coefficient is pointwise, so the band floor at each
/// node is enough.
fn freeze_from_field(
    floor: &Field,
    fields: &CoefficientFields,
    grid: &Grid,
    phi: f64,
) -> Result<FrozenCoefficient> {
    let kappas: Vec<f64> = (0..grid.ny).map(|j| fields.kappa(grid.y(j))).collect();
    let mut values = Field::new(grid, 0.0);
    for i in 0..=grid.nt {
        for j in 0..grid.ny {
            let c = -(phi + 1.0) * abs_pow(floor.at(i, j).abs() / kappas[j], 1.0 / phi);
            if !c.is_finite() || c > 0.0 {
                return Err(Error::numeric(format!(
                    "frozen coefficient must be finite and nonpositive, got {c} at (i={i}, j={j})"
                )));
            }
            values.set(i, j, c);
        }
    }
    Ok(FrozenCoefficient { values })
}

/// Every iterate of both sequences shares the terminal slice exactly, so the
/// coefficient there never enters iterate differences or the fixed point; its
/// half-step average only damps the last interval. Copying the last interior
/// slice keeps that interval's effective reaction in scale with the refreshed
/// band instead of the raw terminal magnitude.
fn relax_terminal_coefficient(frozen: &mut FrozenCoefficient, grid: &Grid) {
    if grid.nt >= 1 {
        let prev = frozen.values.slice(grid.nt - 1).to_vec();
        frozen.values.slice_mut(grid.nt).copy_from_slice(&prev);
    }
}

/// Per-node operator scales, fixed by grid geometry.
struct Stencil {
    /// `beta^2 / (2 dy^2)`.
    diff: Vec<f64>,
    /// `alpha / (2 dy)`; only used at centrally-differenced nodes.
    drift: Vec<f64>,
    /// `alpha / dy` at upwinded nodes, 0 elsewhere.
    upwind: Vec<f64>,
    /// Whether the node uses the one-sided drift stencil.
    upwinded: Vec<bool>,
}

impl Stencil {
    fn build(fields: &CoefficientFields, grid: &Grid) -> Result<Self> {
        let ny = grid.ny;
        let dy = grid.dy();
        let mut diff = vec![0.0; ny];
        let mut drift = vec![0.0; ny];
        let mut upwind = vec![0.0; ny];
        let mut upwinded = vec![false; ny];
        for j in 0..ny {
            let y = grid.y(j);
            let beta = fields.beta(y);
            let alpha = fields.alpha(y);
            if !beta.is_finite() || !alpha.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite drift/diffusion at y = {y}: alpha = {alpha}, beta = {beta}"
                )));
            }
            diff[j] = 0.5 * beta * beta / (dy * dy);
            let central = alpha.abs() / (2.0 * dy);
            if central <= diff[j] {
                drift[j] = central;
                if alpha < 0.0 {
                    drift[j] = -central;
                }
            } else {
                upwinded[j] = true;
                upwind[j] = alpha / dy;
            }
        }
        Ok(Self {
            diff,
            drift,
            upwind,
            upwinded,
        })
    }

    /// Row coefficients of `L` at node `j`: contribution of
    /// `(h_{j-1}, h_j, h_{j+1})`.
    #[inline]
    fn row(&self, j: usize) -> (f64, f64, f64) {
        let d = self.diff[j];
        if self.upwinded[j] {
            let u = self.upwind[j];
            if u >= 0.0 {
                // alpha > 0: forward difference.
                (d, -2.0 * d - u, d + u)
            } else {
                // alpha < 0: backward difference.
                (d - u, -2.0 * d + u, d)
            }
        } else {
            let w = self.drift[j];
            (d - w, -2.0 * d, d + w)
        }
    }

    /// The positive scale entering the theta rule at node `j` (diffusion plus
    /// upwind drift; the reaction part is added by the caller).
    #[inline]
    fn explicit_scale(&self, j: usize) -> f64 {
        2.0 * self.diff[j] + self.upwind[j].abs()
    }
}

#[inline]
fn node_theta(dt: f64, scale: f64) -> f64 {
    if dt * scale <= 2.0 {
        0.5
    } else {
        1.0 - 1.0 / (dt * scale)
    }
}

/// Implicit/explicit weights of the time stepping, frozen for a whole solve.
///
/// One weight per time interval, the largest node theta of the interval: a
/// uniform weight keeps every node of a step on the same scheme (so the
/// ordering algebra holds nodewise) and makes a single scalar recursion for
/// the seeds consistent with every node. Freezing the weights while the
/// reaction coefficient is refreshed keeps the step map monotone across
/// refreshes: a weaker coefficient only relaxes the positivity constraint the
/// weights were built for.
struct SchemeWeights {
    interval: Vec<f64>,
}

impl SchemeWeights {
    fn build(c: &Field, stencil: &Stencil, grid: &Grid) -> Self {
        let dt = grid.dt();
        let ny = grid.ny;
        let mut interval = vec![0.5; grid.nt];
        for (i, slot) in interval.iter_mut().enumerate() {
            let mut theta_bar = 0.5f64;
            for j in 0..ny {
                let ch = 0.5 * (c.at(i, j) + c.at(i + 1, j));
                theta_bar = theta_bar.max(node_theta(dt, stencil.explicit_scale(j) + ch.abs()));
            }
            *slot = theta_bar;
        }
        Self { interval }
    }
}

enum Forcing<'a> {
    /// Externally supplied forcing field, weighted like the operator.
    Given(&'a Field),
    /// Picard forcing: nonlinear part `w` weighted with the interval weight,
    /// reaction part `-c z_prev` weighted with the per-node theta so it
    /// cancels the implicit reaction at a fixed point.
    Picard { w: &'a Field, z_prev: &'a Field },
}

/// Backward solve of
/// `dh/dt + (1/2) beta^2 h_yy + alpha h_y + c h + f = 0`, `h(T, .) = terminal`.
///
/// Boundary rows are closed by linear extrapolation (zero second difference
/// at both boundary nodes), folded into the tridiagonal interior system.
pub fn solve_linear_pde(
    c: &Field,
    f: &Field,
    terminal: &[f64],
    fields: &CoefficientFields,
    grid: &Grid,
) -> Result<Field> {
    let stencil = Stencil::build(fields, grid)?;
    let weights = SchemeWeights::build(c, &stencil, grid);
    step_backward(c, Forcing::Given(f), terminal, &stencil, &weights, grid)
}

fn step_backward(
    c: &Field,
    forcing: Forcing<'_>,
    terminal: &[f64],
    stencil: &Stencil,
    weights: &SchemeWeights,
    grid: &Grid,
) -> Result<Field> {
    if !c.same_shape(grid) {
        return Err(Error::usage("coefficient field must match the grid shape"));
    }
    match forcing {
        Forcing::Given(f) if !f.same_shape(grid) => {
            return Err(Error::usage("forcing field must match the grid shape"));
        }
        Forcing::Picard { w, z_prev }
            if !w.same_shape(grid) || !z_prev.same_shape(grid) =>
        {
            return Err(Error::usage("forcing fields must match the grid shape"));
        }
        _ => {}
    }
    if terminal.len() != grid.ny {
        return Err(Error::usage(format!(
            "terminal data has {} entries, grid has {} nodes",
            terminal.len(),
            grid.ny
        )));
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("terminal data must be finite"));
    }
    if grid.ny < 4 {
        return Err(Error::config(
            "the extrapolation closure needs at least 4 space nodes",
        ));
    }

    let ny = grid.ny;
    let nt = grid.nt;
    let dt = grid.dt();

    let m = ny - 2;
    let mut h = Field::new(grid, 0.0);
    h.slice_mut(nt).copy_from_slice(terminal);

    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut c_prime = vec![0.0; m];
    let mut slice = vec![0.0; ny];

    for i in (0..nt).rev() {
        let theta = weights.interval[i];
        let expl = 1.0 - theta;
        let prev = h.slice(i + 1);
        for k in 0..m {
            let j = k + 1;
            let ch = 0.5 * (c.at(i, j) + c.at(i + 1, j));
            let (lo, dg, up) = stencil.row(j);

            // Explicit half applied to the previous slice.
            let lop = lo * prev[j - 1] + dg * prev[j] + up * prev[j + 1];
            let mut r = prev[j] + expl * dt * (lop + ch * prev[j]);

            // Forcing, weighted so the reaction part cancels at a fixed point.
            r += match forcing {
                Forcing::Given(f) => dt * (theta * f.at(i, j) + expl * f.at(i + 1, j)),
                Forcing::Picard { w, z_prev } => {
                    let w_part = theta * w.at(i, j) + expl * w.at(i + 1, j);
                    let z_part = theta * z_prev.at(i, j) + expl * z_prev.at(i + 1, j);
                    dt * (w_part - ch * z_part)
                }
            };
            rhs[k] = r;

            lower[k] = -theta * dt * lo;
            diag[k] = 1.0 - theta * dt * (dg + ch);
            upper[k] = -theta * dt * up;
        }

        // Fold the zero-second-difference boundary relations
        // h_0 = 2 h_1 - h_2 and h_{n-1} = 2 h_{n-2} - h_{n-3}.
        diag[0] += 2.0 * lower[0];
        upper[0] -= lower[0];
        lower[0] = 0.0;
        diag[m - 1] += 2.0 * upper[m - 1];
        lower[m - 1] -= upper[m - 1];
        upper[m - 1] = 0.0;

        thomas_solve(&lower, &diag, &upper, &mut rhs, &mut c_prime)?;

        slice[1..1 + m].copy_from_slice(&rhs);
        slice[0] = 2.0 * rhs[0] - rhs[1];
        slice[ny - 1] = 2.0 * rhs[m - 1] - rhs[m - 2];
        h.slice_mut(i).copy_from_slice(&slice);
    }
    Ok(h)
}

/// In-place Thomas elimination; `rhs` becomes the solution.
fn thomas_solve(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
    c_prime: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    let mut denom = diag[0];
    if !denom.is_finite() || denom.abs() < 1e-300 {
        return Err(Error::numeric("tridiagonal pivot vanished at row 0"));
    }
    if n > 1 {
        c_prime[0] = upper[0] / denom;
    }
    rhs[0] /= denom;
    for k in 1..n {
        denom = diag[k] - lower[k] * c_prime[k - 1];
        if !denom.is_finite() || denom.abs() < 1e-300 {
            return Err(Error::numeric(format!("tridiagonal pivot vanished at row {k}")));
        }
        if k < n - 1 {
            c_prime[k] = upper[k] / denom;
        }
        rhs[k] = (rhs[k] - lower[k] * rhs[k - 1]) / denom;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= c_prime[k] * rhs[k + 1];
    }
    Ok(())
}

/// One Picard step: solve the linear equation with forcing
/// `f = -gamma sigma^(1+phi) + phi kappa^(-1/phi) |z_prev|^(1+1/phi) - c z_prev`
/// and terminal data `-A`, then clamp the output into `[floor(t), 0]` nodewise.
///
/// `floor` holds the lower bounding samples per time slice; clamping cannot
/// move an iterate away from the fixed point since the solution lies in the
/// band.
pub fn picard_step(
    z_prev: &Field,
    c: &FrozenCoefficient,
    fields: &CoefficientFields,
    grid: &Grid,
    phi: f64,
    gamma: f64,
    penalty: f64,
    floor: &[f64],
) -> Result<Field> {
    let stencil = Stencil::build(fields, grid)?;
    let weights = SchemeWeights::build(&c.values, &stencil, grid);
    let reaction = NodeTerms::build(fields, grid, phi, gamma);
    let guard = floor.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut h = picard_step_inner(
        z_prev, c, &reaction, &stencil, &weights, grid, phi, penalty, guard,
    )?;
    clamp_into_band(&mut h, floor, grid);
    Ok(h)
}

fn clamp_into_band(h: &mut Field, floor: &[f64], grid: &Grid) {
    for i in 0..=grid.nt {
        let lo = floor[i];
        for v in h.slice_mut(i) {
            *v = v.clamp(lo, 0.0);
        }
    }
}

/// Nodewise pieces of the semilinear forcing.
struct NodeTerms {
    /// `gamma sigma^(1+phi)` per node.
    sigma_term: Vec<f64>,
    /// `phi kappa^(-1/phi)` per node.
    kappa_pow: Vec<f64>,
}

impl NodeTerms {
    fn build(fields: &CoefficientFields, grid: &Grid, phi: f64, gamma: f64) -> Self {
        Self {
            sigma_term: (0..grid.ny)
                .map(|j| gamma * fields.sigma(grid.y(j)).powf(1.0 + phi))
                .collect(),
            kappa_pow: (0..grid.ny)
                .map(|j| phi * fields.kappa(grid.y(j)).powf(-1.0 / phi))
                .collect(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn picard_step_inner(
    z_prev: &Field,
    c: &FrozenCoefficient,
    reaction: &NodeTerms,
    stencil: &Stencil,
    weights: &SchemeWeights,
    grid: &Grid,
    phi: f64,
    penalty: f64,
    guard_floor: f64,
) -> Result<Field> {
    if !z_prev.same_shape(grid) {
        return Err(Error::usage("z_prev must match the grid shape"));
    }
    let ny = grid.ny;
    let mut w = Field::new(grid, 0.0);
    for i in 0..=grid.nt {
        for j in 0..ny {
            let z = z_prev.at(i, j);
            w.set(
                i,
                j,
                -reaction.sigma_term[j] + reaction.kappa_pow[j] * abs_pow(z, 1.0 + 1.0 / phi),
            );
        }
    }

    let terminal = vec![-penalty; ny];
    let h = step_backward(
        &c.values,
        Forcing::Picard { w: &w, z_prev },
        &terminal,
        stencil,
        weights,
        grid,
    )?;

    // Divergence guard: the raw solve must stay within a slightly inflated
    // version of the original bracket band.
    let guard_lo = guard_floor.min(-penalty) * (1.0 + 1e-6);
    let guard_hi = 1e-12;
    for i in 0..=grid.nt {
        for (j, v) in h.slice(i).iter().enumerate() {
            if !v.is_finite() || *v < guard_lo || *v > guard_hi {
                return Err(Error::numeric(format!(
                    "iterate left the bracket band at (t = {}, y = {}): value {v}, band [{guard_lo}, {guard_hi}]",
                    grid.t(i),
                    grid.y(j)
                )));
            }
        }
    }
    Ok(h)
}

/// Scalar recursion matching the discretization: backward from `-A`, each
/// interval solves `x = z_next + dt [theta g(x) + (1 - theta) g(z_next)]`
/// for `g(z) = -a + b |z|^r` (the spatial operator vanishes on constants and
/// the reaction cancels by construction).
fn discrete_curve(
    a: f64,
    b: f64,
    r: f64,
    penalty: f64,
    dt: f64,
    weights: &[f64],
) -> Result<Vec<f64>> {
    let g = |z: f64| -a + b * z.abs().powf(r);
    let dg = |z: f64| -b * r * z.abs().powf(r - 1.0);
    let nt = weights.len();
    let mut values = vec![0.0; nt + 1];
    values[nt] = -penalty;
    for i in (0..nt).rev() {
        let z_next = values[i + 1];
        let theta = weights[i];
        let target = z_next + dt * (1.0 - theta) * g(z_next);
        // F(x) = x - dt theta g(x) - target; F' = 1 - dt theta g'(x) > 0.
        let mut lo = z_next.min(-(a / b).powf(1.0 / r)) - dt * a - 1.0;
        while {
            let flo = lo - dt * theta * g(lo) - target;
            flo >= 0.0
        } {
            lo = 2.0 * lo - 1.0;
            if lo < -1e12 {
                return Err(Error::numeric("seed recursion failed to bracket the root"));
            }
        }
        let mut hi = 0.0;
        let mut x = z_next;
        for _ in 0..200 {
            let fx = x - dt * theta * g(x) - target;
            if fx.abs() <= 1e-15 * x.abs().max(penalty) {
                break;
            }
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let step = fx / (1.0 - dt * theta * dg(x));
            let mut next = x - step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-16 * x.abs().max(1e-300) {
                x = next;
                break;
            }
            x = next;
        }
        if !(x < 0.0) || !x.is_finite() {
            return Err(Error::numeric(format!(
                "seed recursion left the negative half-line (a = {a}, b = {b}, r = {r}, x = {x})"
            )));
        }
        values[i] = x;
    }
    Ok(values)
}

/// Solver configuration beyond the grid.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Absolute sup-norm tolerance for the bracket gap and the per-sequence
    /// increments.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Refreeze the reaction coefficient from the current lower envelope
    /// after each iteration. Every bracketing iterate is itself a valid
    /// sub-/supersolution (the Hamiltonian is convex), so each refreeze
    /// restarts the same scheme from a tighter, still-valid pair; the
    /// once-frozen coefficient built from the initial curves slows the
    /// squeeze down by orders of magnitude whenever those curves sit far
    /// below the solution.
    pub refresh_coefficient: bool,
}

impl SolverOptions {
    /// Default tolerance `1e-6 * A`, 100 iterations, coefficient refresh on.
    pub fn for_penalty(penalty: f64) -> Self {
        Self {
            tolerance: 1e-6 * penalty,
            max_iterations: 100,
            refresh_coefficient: true,
        }
    }
}

/// Converged solution of the reduced HJB equation with iteration diagnostics.
#[derive(Debug)]
pub struct HjbSolution {
    pub grid: Grid,
    /// Bracket midpoint after the final iteration.
    pub z: Field,
    /// Final lower/upper iterate fields.
    pub lower_final: Field,
    pub upper_final: Field,
    /// Discretization-consistent bounding curves used as seeds.
    pub lower_curve: BoundingCurve,
    pub upper_curve: BoundingCurve,
    /// Sup-norm bracket gap after each iteration.
    pub gap_history: Vec<f64>,
    /// Sup-norm self-increment of each sequence per iteration.
    pub lower_increments: Vec<f64>,
    pub upper_increments: Vec<f64>,
    /// Worst one-sided ordering violation observed across all iterations.
    pub max_lower_violation: f64,
    pub max_upper_violation: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final bracket gap.
    pub gap: f64,
    /// Snapshot of the inputs.
    pub params: ModelParams,
    /// Declared model-level bounds.
    pub declared_bounds: CoefficientBounds,
    /// Grid-effective bounds the bracketing curves were built from.
    pub effective_bounds: CoefficientBounds,
    /// Number of interpolation queries clamped to the spatial boundary.
    boundary_clamps: AtomicU64,
}

impl Clone for HjbSolution {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid,
            z: self.z.clone(),
            lower_final: self.lower_final.clone(),
            upper_final: self.upper_final.clone(),
            lower_curve: self.lower_curve.clone(),
            upper_curve: self.upper_curve.clone(),
            gap_history: self.gap_history.clone(),
            lower_increments: self.lower_increments.clone(),
            upper_increments: self.upper_increments.clone(),
            max_lower_violation: self.max_lower_violation,
            max_upper_violation: self.max_upper_violation,
            iterations: self.iterations,
            converged: self.converged,
            gap: self.gap,
            params: self.params,
            declared_bounds: self.declared_bounds,
            effective_bounds: self.effective_bounds,
            boundary_clamps: AtomicU64::new(self.boundary_clamps.load(Ordering::Relaxed)),
        }
    }
}

impl HjbSolution {
    /// Bilinear interpolation of `z`; queries outside the spatial domain are
    /// clamped to the boundary and counted.
    pub fn z_at(&self, t: f64, y: f64) -> f64 {
        let grid = &self.grid;
        if y < grid.y_min || y > grid.y_max {
            self.boundary_clamps.fetch_add(1, Ordering::Relaxed);
        }
        let y = y.clamp(grid.y_min, grid.y_max);
        let t = t.clamp(0.0, grid.horizon);

        let ft = t / grid.dt();
        let i0 = (ft.floor() as usize).min(grid.nt - 1);
        let wt = (ft - i0 as f64).clamp(0.0, 1.0);
        let fy = ((y - grid.y_min) / grid.dy()).max(0.0);
        let j0 = (fy.floor() as usize).min(grid.ny - 2);
        let wy = (fy - j0 as f64).clamp(0.0, 1.0);

        let z00 = self.z.at(i0, j0);
        let z01 = self.z.at(i0, j0 + 1);
        let z10 = self.z.at(i0 + 1, j0);
        let z11 = self.z.at(i0 + 1, j0 + 1);
        (1.0 - wt) * ((1.0 - wy) * z00 + wy * z01) + wt * ((1.0 - wy) * z10 + wy * z11)
    }

    pub fn boundary_clamp_count(&self) -> u64 {
        self.boundary_clamps.load(Ordering::Relaxed)
    }
}

/// Run the bracketed Picard iteration.
///
/// Both sequences are seeded from bounding curves built with the
/// grid-effective coefficient bounds (the declared caps may be much wider
/// than anything the discrete problem sees, which would only widen the
/// bracket). Convergence requires the bracket gap and both self-increments to
/// drop below `tolerance` in sup norm; hitting `max_iterations` first returns
/// `converged = false` rather than an error.
pub fn solve_hjb(
    params: &ModelParams,
    fields: &CoefficientFields,
    grid: &Grid,
    tolerance: f64,
    max_iterations: usize,
) -> Result<HjbSolution> {
    let options = SolverOptions {
        tolerance,
        max_iterations,
        ..SolverOptions::for_penalty(params.penalty)
    };
    solve_hjb_with(params, fields, grid, &options)
}

pub fn solve_hjb_with(
    params: &ModelParams,
    fields: &CoefficientFields,
    grid: &Grid,
    options: &SolverOptions,
) -> Result<HjbSolution> {
    params.check()?;
    if !(options.tolerance > 0.0) {
        return Err(Error::config(format!(
            "solver tolerance must be positive, got {}",
            options.tolerance
        )));
    }
    if options.max_iterations == 0 {
        return Err(Error::config("solver needs at least one iteration"));
    }
    if params.penalty <= 0.0 {
        return Err(Error::config(
            "the terminal penalty must be positive for the bracketing solver",
        ));
    }
    if (grid.horizon - params.horizon).abs() > 1e-12 * params.horizon.max(1.0) {
        return Err(Error::usage(format!(
            "grid horizon {} does not match model horizon {}",
            grid.horizon, params.horizon
        )));
    }

    let phi = params.impact_exponent;
    let gamma = params.risk_aversion;
    let penalty = params.penalty;
    let r = 1.0 + 1.0 / phi;
    let effective = fields.observed_bounds(&grid.ys())?;
    let a_low = gamma * effective.sigma_hi.powf(1.0 + phi);
    let b_low = phi * effective.kappa_hi.powf(-1.0 / phi);
    let a_up = gamma * effective.sigma_lo.powf(1.0 + phi);
    let b_up = phi * effective.kappa_lo.powf(-1.0 / phi);
    let stencil = Stencil::build(fields, grid)?;
    let dt = grid.dt();

    // The frozen coefficient needs the lower seed, whose recursion needs the
    // interval weights, which depend on the frozen coefficient. Start from a
    // fully-implicit weighting, then re-freeze until the envelope used for
    // the coefficient dominates the seed (one round in practice).
    let mut envelope = discrete_curve(a_low, b_low, r, penalty, dt, &vec![1.0; grid.nt])?;
    let mut frozen = freeze_from_slices(&envelope, fields, grid, phi)?;
    relax_terminal_coefficient(&mut frozen, grid);
    let mut weights = SchemeWeights::build(&frozen.values, &stencil, grid);
    let mut lower_seed = discrete_curve(a_low, b_low, r, penalty, dt, &weights.interval)?;
    for _ in 0..4 {
        if lower_seed
            .iter()
            .zip(&envelope)
            .all(|(s, e)| s.abs() <= e.abs() * (1.0 + 1e-12))
        {
            break;
        }
        for (e, s) in envelope.iter_mut().zip(&lower_seed) {
            *e = e.min(*s);
        }
        frozen = freeze_from_slices(&envelope, fields, grid, phi)?;
        relax_terminal_coefficient(&mut frozen, grid);
        weights = SchemeWeights::build(&frozen.values, &stencil, grid);
        lower_seed = discrete_curve(a_low, b_low, r, penalty, dt, &weights.interval)?;
    }
    let upper_seed = discrete_curve(a_up, b_up, r, penalty, dt, &weights.interval)?;
    for (e, s) in envelope.iter_mut().zip(&lower_seed) {
        *e = e.min(*s);
    }

    let times = grid.times();
    let sub = BoundingCurve::from_samples(
        CurveKind::Subsolution,
        a_low,
        b_low,
        r,
        penalty,
        times.clone(),
        lower_seed.clone(),
    )?;
    let sup = BoundingCurve::from_samples(
        CurveKind::Supersolution,
        a_up,
        b_up,
        r,
        penalty,
        times,
        upper_seed.clone(),
    )?;

    let mut lower = Field::new(grid, 0.0);
    let mut upper = Field::new(grid, 0.0);
    for i in 0..=grid.nt {
        lower.slice_mut(i).fill(lower_seed[i]);
        upper.slice_mut(i).fill(upper_seed[i]);
    }

    let reaction = NodeTerms::build(fields, grid, phi, gamma);
    let guard_floor = envelope.iter().cloned().fold(f64::INFINITY, f64::min);
    // Nodewise floor feeding the coefficient refreshes. Ratcheted toward zero
    // so the coefficient magnitude never grows between refreshes; growing
    // magnitudes would void the positivity margin the frozen weights were
    // built for and let refresh feedback oscillate.
    let mut coeff_floor = Field::new(grid, 0.0);
    for i in 0..=grid.nt {
        coeff_floor.slice_mut(i).fill(envelope[i]);
    }
    let mut gap_history = Vec::new();
    let mut lower_increments = Vec::new();
    let mut upper_increments = Vec::new();
    let mut max_lower_violation: f64 = 0.0;
    let mut max_upper_violation: f64 = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut gap = lower.sup_distance(&upper);

    for k in 1..=options.max_iterations {
        let mut new_lower = picard_step_inner(
            &lower, &frozen, &reaction, &stencil, &weights, grid, phi, penalty, guard_floor,
        )?;
        let mut new_upper = picard_step_inner(
            &upper, &frozen, &reaction, &stencil, &weights, grid, phi, penalty, guard_floor,
        )?;

        clamp_into_band(&mut new_lower, &envelope, grid);
        clamp_into_band(&mut new_upper, &envelope, grid);

        // Ordering and increments are measured on the clamped states: the
        // clamp is part of the step, and clamping is order-preserving.
        let mut lower_inc: f64 = 0.0;
        let mut upper_inc: f64 = 0.0;
        let mut gap_k: f64 = 0.0;
        for idx in 0..new_lower.data.len() {
            let dn = new_lower.data[idx] - lower.data[idx];
            let up = new_upper.data[idx] - upper.data[idx];
            max_lower_violation = max_lower_violation.max(-dn);
            max_upper_violation = max_upper_violation.max(up);
            lower_inc = lower_inc.max(dn.abs());
            upper_inc = upper_inc.max(up.abs());
            gap_k = gap_k.max(new_upper.data[idx] - new_lower.data[idx]);
        }
        lower = new_lower;
        upper = new_upper;
        gap = gap_k;
        gap_history.push(gap_k);
        lower_increments.push(lower_inc);
        upper_increments.push(upper_inc);
        iterations = k;

        if gap_k < options.tolerance
            && lower_inc < options.tolerance
            && upper_inc < options.tolerance
        {
            converged = true;
            break;
        }

        if options.refresh_coefficient {
            // Tighten the clamp envelope to the current lower iterate's
            // per-slice minimum and refreeze the reaction coefficient from
            // the ratcheted nodewise floor.
            for i in 0..=grid.nt {
                let row_min = lower.slice(i).iter().cloned().fold(f64::INFINITY, f64::min);
                envelope[i] = envelope[i].max(row_min).min(0.0);
                for (f, v) in coeff_floor.slice_mut(i).iter_mut().zip(lower.slice(i)) {
                    *f = f.max(*v).min(0.0);
                }
            }
            frozen = freeze_from_field(&coeff_floor, fields, grid, phi)?;
            relax_terminal_coefficient(&mut frozen, grid);
        }
    }

    let mut z = lower.clone();
    for idx in 0..z.data.len() {
        z.data[idx] = 0.5 * (lower.data[idx] + upper.data[idx]);
    }
    // Terminal slice is the exact boundary condition.
    z.slice_mut(grid.nt).fill(-penalty);

    Ok(HjbSolution {
        grid: *grid,
        z,
        lower_final: lower,
        upper_final: upper,
        lower_curve: sub,
        upper_curve: sup,
        gap_history,
        lower_increments,
        upper_increments,
        max_lower_violation,
        max_upper_violation,
        iterations,
        converged,
        gap,
        params: *params,
        declared_bounds: fields.bounds,
        effective_bounds: effective,
        boundary_clamps: AtomicU64::new(0),
    })
}
