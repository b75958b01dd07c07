//! Bounding scalar ODEs for the value-function factor, with the derived
//! constants: penalty floor, the `ell` constant, the fractional-execution
//! penalty threshold, and the blow-up envelope.
//!
//! Both bracketing curves solve `y' = a - b|y|^r, y(T) = -A` for curve-specific
//! `(a, b)` built from the coefficient bounds. When `b A^r - a > 0` the curve
//! decreases backward onto `[-A, -(a/b)^(1/r))`; otherwise it lives in
//! `(-(a/b)^(1/r), -A]` and increases toward the terminal value. The solver
//! needs both regimes: small penalties put the lower curve in the second one.

use crate::error::{Error, Result};
use crate::model::CoefficientBounds;

/// Which side of the bracket a curve provides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Subsolution,
    Supersolution,
}

/// Samples of one bounding-ODE trajectory with its defining data.
#[derive(Debug, Clone)]
pub struct BoundingCurve {
    pub kind: CurveKind,
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub penalty: f64,
    /// Ascending time grid on [0, T].
    pub times: Vec<f64>,
    /// Curve samples, aligned with `times`; all strictly negative.
    pub values: Vec<f64>,
    /// Whether the solvability condition `b A^r - a > 0` holds, i.e. the
    /// samples stay within `[-A, 0)`.
    pub feasible: bool,
}

impl BoundingCurve {
    /// Assemble a curve from precomputed samples (validation of shapes only).
    pub fn from_samples(
        kind: CurveKind,
        a: f64,
        b: f64,
        r: f64,
        penalty: f64,
        times: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_ode_inputs(a, b, r, penalty, &times)?;
        if times.len() != values.len() {
            return Err(Error::usage(format!(
                "times/values length mismatch: {} vs {}",
                times.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v >= 0.0) {
            return Err(Error::numeric("curve samples must be finite and negative"));
        }
        let feasible = b * penalty.powf(r) - a > 0.0;
        Ok(Self {
            kind,
            a,
            b,
            r,
            penalty,
            times,
            values,
            feasible,
        })
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("curve has samples")
    }

    /// Linear interpolation between samples; clamped at the ends.
    pub fn value_at(&self, t: f64) -> f64 {
        let times = &self.times;
        let n = times.len();
        if t <= times[0] {
            return self.values[0];
        }
        if t >= times[n - 1] {
            return self.values[n - 1];
        }
        let idx = match times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i,
        };
        let (t0, t1) = (times[idx - 1], times[idx]);
        let w = (t - t0) / (t1 - t0);
        self.values[idx - 1] * (1.0 - w) + self.values[idx] * w
    }

    /// `-(a/b)^(1/r)`: the equilibrium the curve approaches backward in time.
    pub fn equilibrium(&self) -> f64 {
        -(self.a / self.b).powf(1.0 / self.r)
    }
}

fn check_ode_inputs(a: f64, b: f64, r: f64, penalty: f64, times: &[f64]) -> Result<()> {
    if !a.is_finite() || a < 0.0 {
        return Err(Error::config(format!("ode constant a must be finite and >= 0, got {a}")));
    }
    if !b.is_finite() || b <= 0.0 {
        return Err(Error::config(format!("ode constant b must be positive, got {b}")));
    }
    if !r.is_finite() || r <= 1.0 {
        return Err(Error::config(format!("ode exponent r must exceed 1, got {r}")));
    }
    if !penalty.is_finite() || penalty <= 0.0 {
        return Err(Error::config(format!(
            "terminal penalty must be positive for a bounding curve, got {penalty}"
        )));
    }
    if times.len() < 2 {
        return Err(Error::usage("time grid needs at least two points"));
    }
    if times[0] != 0.0 {
        return Err(Error::usage(format!("time grid must start at 0, got {}", times[0])));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::usage("time grid must be strictly ascending"));
    }
    Ok(())
}

/// Solve the bounding ODE under the solvability condition `b A^r - a > 0`.
///
/// Samples are produced on `times` (ascending, spanning [0, T], last entry is
/// the horizon); the terminal sample is exactly `-A`.
pub fn solve_bounding_ode(
    kind: CurveKind,
    a: f64,
    b: f64,
    r: f64,
    penalty: f64,
    times: &[f64],
) -> Result<BoundingCurve> {
    check_ode_inputs(a, b, r, penalty, times)?;
    if b * penalty.powf(r) - a <= 0.0 {
        return Err(Error::infeasible(format!(
            "solvability condition violated: b A^r - a = {:e} <= 0 (a = {a}, b = {b}, r = {r}, A = {penalty})",
            b * penalty.powf(r) - a
        )));
    }
    solve_bounding_ode_relaxed(kind, a, b, r, penalty, times)
}

/// Solve the bounding ODE without the solvability gate.
///
/// The initial value problem is well posed for any `A > 0`: when
/// `b A^r - a <= 0` the trajectory increases toward `-A` instead, staying in
/// `(-(a/b)^(1/r), -A]`. The PDE solver uses this entry point because small
/// penalties put the lower curve in that regime.
pub fn solve_bounding_ode_relaxed(
    kind: CurveKind,
    a: f64,
    b: f64,
    r: f64,
    penalty: f64,
    times: &[f64],
) -> Result<BoundingCurve> {
    check_ode_inputs(a, b, r, penalty, times)?;
    let horizon = *times.last().unwrap();

    // Integrate u(s) = y(T - s) forward in s: u' = b|u|^r - a, u(0) = -A.
    let mut values = vec![0.0; times.len()];
    let n = times.len();
    values[n - 1] = -penalty;
    let mut u = -penalty;
    for j in (0..n - 1).rev() {
        let s_len = times[j + 1] - times[j];
        u = integrate_interval(u, s_len, a, b, r)?;
        values[j] = u;
    }

    // Samples must remain strictly negative with an epsilon-A margin.
    let margin = f64::EPSILON * penalty;
    if values.iter().any(|v| !v.is_finite() || *v > -margin) {
        return Err(Error::numeric(format!(
            "bounding curve left the negative half-line (a = {a}, b = {b}, r = {r}, A = {penalty})"
        )));
    }

    let feasible = b * penalty.powf(r) - a > 0.0;
    let _ = horizon;
    Ok(BoundingCurve {
        kind,
        a,
        b,
        r,
        penalty,
        times: times.to_vec(),
        values,
        feasible,
    })
}

/// RK4 over one interval with step halving until two successive refinements
/// agree to 1e-10 relative.
fn integrate_interval(u0: f64, s_len: f64, a: f64, b: f64, r: f64) -> Result<f64> {
    let rhs = |u: f64| b * u.abs().powf(r) - a;
    let run = |steps: usize| -> f64 {
        let h = s_len / steps as f64;
        let mut u = u0;
        for _ in 0..steps {
            let k1 = rhs(u);
            let k2 = rhs(u + 0.5 * h * k1);
            let k3 = rhs(u + 0.5 * h * k2);
            let k4 = rhs(u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !u.is_finite() {
                return f64::NAN;
            }
        }
        u
    };

    let mut steps = 4usize;
    let mut coarse = run(steps);
    loop {
        let fine = run(2 * steps);
        if coarse.is_finite() && fine.is_finite() {
            let scale = fine.abs().max(u0.abs()).max(1e-300);
            if (fine - coarse).abs() <= 1e-10 * scale {
                return Ok(fine);
            }
        }
        steps *= 2;
        coarse = fine;
        if steps > (1 << 22) {
            return Err(Error::numeric(format!(
                "bounding-ODE integration failed to converge on an interval of length {s_len} \
                 (a = {a}, b = {b}, r = {r})"
            )));
        }
    }
}

/// Lower curve of the bracket: `a = gamma sigma_hi^(1+phi)`,
/// `b = phi kappa_hi^(-1/phi)`.
pub fn subsolution_curve(
    risk_aversion: f64,
    phi: f64,
    bounds: &CoefficientBounds,
    penalty: f64,
    times: &[f64],
) -> Result<BoundingCurve> {
    let a = risk_aversion * bounds.sigma_hi.powf(1.0 + phi);
    let b = phi * bounds.kappa_hi.powf(-1.0 / phi);
    solve_bounding_ode_relaxed(CurveKind::Subsolution, a, b, 1.0 + 1.0 / phi, penalty, times)
}

/// Upper curve of the bracket: `a = gamma sigma_lo^(1+phi)`,
/// `b = phi kappa_lo^(-1/phi)`.
pub fn supersolution_curve(
    risk_aversion: f64,
    phi: f64,
    bounds: &CoefficientBounds,
    penalty: f64,
    times: &[f64],
) -> Result<BoundingCurve> {
    let a = risk_aversion * bounds.sigma_lo.powf(1.0 + phi);
    let b = phi * bounds.kappa_lo.powf(-1.0 / phi);
    solve_bounding_ode_relaxed(CurveKind::Supersolution, a, b, 1.0 + 1.0 / phi, penalty, times)
}

/// `-(gamma sigma_lo^(1+phi) kappa_lo^(1/phi) / phi)^(phi/(phi+1))`: the
/// ceiling of the upper curve. Zero when `gamma sigma_lo = 0`.
pub fn penalty_floor(risk_aversion: f64, phi: f64, sigma_lo: f64, kappa_lo: f64) -> Result<f64> {
    if !(kappa_lo > 0.0) {
        return Err(Error::config(format!("kappa_lo must be positive, got {kappa_lo}")));
    }
    if !risk_aversion.is_finite() || !phi.is_finite() || !sigma_lo.is_finite() {
        return Err(Error::numeric("penalty_floor inputs must be finite"));
    }
    let base = risk_aversion * sigma_lo.powf(1.0 + phi) * kappa_lo.powf(1.0 / phi) / phi;
    Ok(-base.powf(phi / (phi + 1.0)))
}

/// `ell = inf_s |zbar(s)| (T - s + A^(-1/phi))^phi` over the curve's sample
/// grid.
pub fn ell_constant(supersolution: &BoundingCurve, phi: f64) -> Result<f64> {
    if supersolution.values.is_empty() {
        return Err(Error::usage("ell_constant needs a non-empty curve"));
    }
    let horizon = supersolution.horizon();
    let shift = supersolution.penalty.powf(-1.0 / phi);
    let mut ell = f64::INFINITY;
    for (t, v) in supersolution.times.iter().zip(&supersolution.values) {
        let weight = (horizon - t + shift).powf(phi);
        ell = ell.min(v.abs() * weight);
    }
    if !(ell > 0.0) {
        return Err(Error::numeric(format!("ell constant must be positive, got {ell}")));
    }
    Ok(ell)
}

/// Strict penalty threshold guaranteeing execution of the fraction
/// `1 - theta` of the initial inventory:
/// `A > ((1/T) exp[(ell/kappa_hi)^(-1/phi) ln(1/(1-theta))])^phi`.
pub fn penalty_for_fraction(
    theta: f64,
    ell: f64,
    kappa_hi: f64,
    horizon: f64,
    phi: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::domain(format!("theta must lie in [0, 1), got {theta}")));
    }
    if !(ell > 0.0) {
        return Err(Error::domain(format!("ell must be positive, got {ell}")));
    }
    let rate = (ell / kappa_hi).powf(-1.0 / phi);
    Ok(((1.0 / horizon) * (rate * (1.0 / (1.0 - theta)).ln()).exp()).powf(phi))
}

/// Two-sided blow-up band at time `t`:
/// `(1 / (C (A^(-1/phi) + T - t)^phi), C / (A^(-1/phi) + T - t)^phi)`.
pub fn blowup_envelope(
    penalty: f64,
    phi: f64,
    t: f64,
    horizon: f64,
    c: f64,
) -> Result<(f64, f64)> {
    if c < 1.0 {
        return Err(Error::domain(format!("envelope constant must be >= 1, got {c}")));
    }
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::domain(format!("t = {t} outside [0, {horizon}]")));
    }
    let denom = (penalty.powf(-1.0 / phi) + horizon - t).powf(phi);
    Ok((1.0 / (c * denom), c / denom))
}

/// Constructive envelope constant for the curve `y' = a - b|y|^r, y(T) = -A`
/// (valid in the regime `b A^r - a > 0`), built from the explicit two-sided
/// estimates on `F^(-1)`:
///
/// - lower: `|y| >= [A^(1-r) + b(r-1)(T-t)]^(1/(1-r))`,
/// - upper: `|y| <= K [A^(1-r) + b(r-1)(T-t)]^(1/(1-r))` with
///   `K = [a(r-1)T (b/a)^(1/r) + 1]^(1/(r-1))`.
///
/// Replacing `b(r-1)` by 1 inside the bracket costs at most `max(1, (b(r-1))^phi)`
/// on one side and `max(1, (b(r-1))^(-phi))` on the other, with `phi = 1/(r-1)`.
pub fn envelope_constant(a: f64, b: f64, r: f64, horizon: f64) -> Result<f64> {
    if !(b > 0.0) || !(r > 1.0) || a < 0.0 {
        return Err(Error::config(format!(
            "envelope constant needs a >= 0, b > 0, r > 1; got a = {a}, b = {b}, r = {r}"
        )));
    }
    let phi = 1.0 / (r - 1.0);
    let m = b * (r - 1.0);
    let k = if a == 0.0 {
        1.0
    } else {
        (a * (r - 1.0) * horizon * (b / a).powf(1.0 / r) + 1.0).powf(phi)
    };
    let lower_side = m.powf(phi).max(1.0);
    let upper_side = k * m.powf(-phi).max(1.0);
    Ok(lower_side.max(upper_side))
}

/// Envelope constant covering a specific curve.
pub fn curve_envelope_constant(curve: &BoundingCurve) -> Result<f64> {
    envelope_constant(curve.a, curve.b, curve.r, curve.horizon())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_times(horizon: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| horizon * i as f64 / n as f64).collect()
    }

    fn arccoth(x: f64) -> f64 {
        0.5 * ((x + 1.0) / (x - 1.0)).ln()
    }

    fn coth(x: f64) -> f64 {
        1.0 / x.tanh()
    }

    #[test]
    fn terminal_sample_is_exact() {
        for &(a, b, r, pen) in &[(0.0, 1.0, 2.0, 2.0), (1.0, 1.0, 2.0, 2.0), (0.3, 2.0, 7.0 / 3.0, 5.0)] {
            let curve =
                solve_bounding_ode_relaxed(CurveKind::Subsolution, a, b, r, pen, &uniform_times(1.0, 64))
                    .unwrap();
            assert_eq!(*curve.values.last().unwrap(), -pen);
        }
    }

    #[test]
    fn separable_closed_form_when_a_is_zero() {
        // |y(t)| = [A^(1-r) + b(r-1)(T-t)]^(1/(1-r)); at t = 0 with
        // a = 0, b = 1, r = 2, A = 2, T = 1 this is -2/3.
        let curve =
            solve_bounding_ode(CurveKind::Supersolution, 0.0, 1.0, 2.0, 2.0, &uniform_times(1.0, 200))
                .unwrap();
        assert!((curve.values[0] + 2.0 / 3.0).abs() < 1e-9);
        for (t, v) in curve.times.iter().zip(&curve.values) {
            let exact = -(0.5f64 + (1.0 - t)).recip();
            assert!((v - exact).abs() < 1e-9, "t = {t}: {v} vs {exact}");
        }
    }

    #[test]
    fn coth_closed_form() {
        // y' = 1 - y^2, y(1) = -2: y(t) = -coth((T - t) + arccoth 2).
        let curve =
            solve_bounding_ode(CurveKind::Subsolution, 1.0, 1.0, 2.0, 2.0, &uniform_times(1.0, 100))
                .unwrap();
        for (t, v) in curve.times.iter().zip(&curve.values) {
            let exact = -coth((1.0 - t) + arccoth(2.0));
            assert!((v - exact).abs() < 1e-9, "t = {t}: {v} vs {exact}");
        }
        assert!((curve.values[0] - (-coth(1.0 + arccoth(2.0)))).abs() < 1e-9);
        // Feasible regime: monotone decreasing in t, values in [-A, -(a/b)^(1/r)).
        assert!(curve.feasible);
        for w in curve.values.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for v in &curve.values {
            assert!(*v >= -2.0 && *v < -1.0);
        }
    }

    #[test]
    fn reversed_orientation_below_threshold() {
        // Same ODE with A = 0.5 < (a/b)^(1/r) = 1: the strict solver refuses,
        // the relaxed one matches y(t) = -tanh((T - t) + artanh 0.5).
        let times = uniform_times(1.0, 100);
        assert!(matches!(
            solve_bounding_ode(CurveKind::Subsolution, 1.0, 1.0, 2.0, 0.5, &times),
            Err(Error::Infeasible(_))
        ));
        let curve =
            solve_bounding_ode_relaxed(CurveKind::Subsolution, 1.0, 1.0, 2.0, 0.5, &times).unwrap();
        assert!(!curve.feasible);
        for (t, v) in curve.times.iter().zip(&curve.values) {
            let exact = -((1.0 - t) + 0.5f64.atanh()).tanh();
            assert!((v - exact).abs() < 1e-9, "t = {t}: {v} vs {exact}");
        }
        // Values now sit below -A, increasing toward it.
        for w in curve.values.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for v in &curve.values {
            assert!(*v <= -0.5 && *v > -1.0);
        }
    }

    #[test]
    fn agrees_with_adaptive_oracle_on_generic_case() {
        // Independent embedded RK45 (Cash-Karp) at tight tolerance.
        let (a, b, r, pen, horizon) = (1.0, 2.0, 7.0 / 3.0, 3.0, 2.0);
        let times = uniform_times(horizon, 50);
        let curve =
            solve_bounding_ode(CurveKind::Subsolution, a, b, r, pen, &times).unwrap();
        let rhs = |u: f64| b * u.abs().powf(r) - a;
        // Integrate u' forward in s with adaptive steps; record at grid times.
        let mut u = -pen;
        let mut s = 0.0;
        let mut idx = times.len() - 1;
        let mut oracle = vec![0.0; times.len()];
        oracle[idx] = u;
        while idx > 0 {
            let s_target = horizon - times[idx - 1];
            let mut h: f64 = 1e-3;
            while s < s_target {
                h = h.min(s_target - s);
                loop {
                    let k1 = rhs(u);
                    let k2 = rhs(u + h * 0.2 * k1);
                    let k3 = rhs(u + h * (0.075 * k1 + 0.225 * k2));
                    let k4 = rhs(u + h * (0.3 * k1 - 0.9 * k2 + 1.2 * k3));
                    let k5 = rhs(u + h * (-11.0 / 54.0 * k1 + 2.5 * k2 - 70.0 / 27.0 * k3 + 35.0 / 27.0 * k4));
                    let k6 = rhs(u
                        + h * (1631.0 / 55296.0 * k1
                            + 175.0 / 512.0 * k2
                            + 575.0 / 13824.0 * k3
                            + 44275.0 / 110592.0 * k4
                            + 253.0 / 4096.0 * k5));
                    let u5 = u + h * (37.0 / 378.0 * k1 + 250.0 / 621.0 * k3 + 125.0 / 594.0 * k4 + 512.0 / 1771.0 * k6);
                    let u4 = u + h * (2825.0 / 27648.0 * k1
                        + 18575.0 / 48384.0 * k3
                        + 13525.0 / 55296.0 * k4
                        + 277.0 / 14336.0 * k5
                        + 0.25 * k6);
                    let err = (u5 - u4).abs() / u5.abs().max(1.0);
                    if err < 1e-12 || h < 1e-12 {
                        u = u5;
                        s += h;
                        h *= 1.5;
                        break;
                    }
                    h *= 0.5;
                }
            }
            idx -= 1;
            oracle[idx] = u;
        }
        for (i, v) in curve.values.iter().enumerate() {
            let rel = (v - oracle[i]).abs() / oracle[i].abs();
            assert!(rel < 1e-8, "node {i}: {v} vs {}", oracle[i]);
        }
    }

    #[test]
    fn penalty_floor_values() {
        assert_eq!(penalty_floor(1.0, 0.75, 0.0, 1.0).unwrap(), 0.0);
        assert!((penalty_floor(1.0, 1.0, 1.0, 1.0).unwrap() + 1.0).abs() < 1e-14);
        // Hand evaluation: (0.05 * 1 * 0.05^(4/3) / 0.75)^(3/7).
        let expected = -(0.05f64 * 0.05f64.powf(4.0 / 3.0) / 0.75).powf(3.0 / 7.0);
        let got = penalty_floor(0.05, 0.75, 1.0, 0.05).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!(penalty_floor(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn ell_constant_for_flat_curve() {
        // Constant curve -c on [0, T]: minimum attained at s = T, value c / A.
        let times = uniform_times(2.0, 40);
        let values = vec![-1.5; times.len()];
        let curve = BoundingCurve::from_samples(
            CurveKind::Supersolution,
            0.0,
            1.0,
            2.0,
            4.0,
            times,
            values,
        )
        .unwrap();
        let ell = ell_constant(&curve, 1.0).unwrap();
        assert!((ell - 1.5 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn ell_constant_identity_case() {
        // a = 0, b = 1, r = 2 (phi = 1), A = 2, T = 1: the product is
        // identically 1 along the curve.
        let curve =
            solve_bounding_ode(CurveKind::Supersolution, 0.0, 1.0, 2.0, 2.0, &uniform_times(1.0, 500))
                .unwrap();
        let ell = ell_constant(&curve, 1.0).unwrap();
        assert!((ell - 1.0).abs() < 1e-8, "{ell}");
    }

    #[test]
    fn penalty_for_fraction_examples() {
        // theta = 0: threshold (1/T)^phi.
        let t0 = penalty_for_fraction(0.0, 1.0, 1.0, 2.0, 0.75).unwrap();
        assert!((t0 - 0.5f64.powf(0.75)).abs() < 1e-14);
        // theta = 0.5, ell/kappa = 1, T = 1, phi = 1: exp(ln 2) = 2.
        let t = penalty_for_fraction(0.5, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        // Monotone increasing in theta, diverging toward 1.
        let mut prev = 0.0;
        for k in 0..12 {
            let theta = 1.0 - 2.0f64.powi(-k);
            let v = penalty_for_fraction(theta, 5.0, 5.0, 5.0, 0.75).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(penalty_for_fraction(1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn envelope_shapes() {
        // C = 1, t = T: band collapses to a point at A.
        let (lo, hi) = blowup_envelope(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 1.0).abs() < 1e-14);
        // A = 1, phi = 1, t = 0, T = 1, C = 2: (1/4, 1).
        let (lo, hi) = blowup_envelope(1.0, 1.0, 0.0, 1.0, 2.0).unwrap();
        assert!((lo - 0.25).abs() < 1e-14 && (hi - 1.0).abs() < 1e-14);
        assert!(blowup_envelope(1.0, 1.0, 0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn curves_inside_constructive_envelope() {
        // Feasible configurations: both bracketing curves lie inside the band
        // built from the explicit estimates.
        for &(a, b, pen) in &[(1.0, 1.0, 2.0), (0.5, 2.0, 3.0), (0.0, 1.0, 2.0)] {
            let r = 2.0;
            let phi = 1.0;
            let horizon = 1.0;
            let times = uniform_times(horizon, 256);
            let curve =
                solve_bounding_ode(CurveKind::Subsolution, a, b, r, pen, &times).unwrap();
            let c = curve_envelope_constant(&curve).unwrap();
            assert!(c >= 1.0);
            for (t, v) in curve.times.iter().zip(&curve.values) {
                let (lo, hi) = blowup_envelope(pen, phi, *t, horizon, c).unwrap();
                assert!(
                    v.abs() >= lo * (1.0 - 1e-12) && v.abs() <= hi * (1.0 + 1e-12),
                    "a={a} b={b} A={pen} t={t}: |{v}| outside [{lo}, {hi}]"
                );
            }
        }
    }

    #[test]
    fn sub_below_super_on_matched_grids() {
        let bounds = CoefficientBounds::new(0.5, 2.0, 0.5, 2.0).unwrap();
        let times = uniform_times(1.0, 128);
        for &(gamma, phi, pen) in &[(1.0, 1.0, 3.0), (0.2, 0.75, 2.0), (0.0, 0.5, 1.5)] {
            let sub = subsolution_curve(gamma, phi, &bounds, pen, &times).unwrap();
            let sup = supersolution_curve(gamma, phi, &bounds, pen, &times).unwrap();
            let floor = penalty_floor(gamma, phi, bounds.sigma_lo, bounds.kappa_lo).unwrap();
            for i in 0..times.len() {
                assert!(sub.values[i] <= sup.values[i] + 1e-12);
                // Upper curve respects the penalty floor when sigma_lo > 0.
                assert!(sup.values[i] <= floor + 1e-12);
            }
        }
    }
}
