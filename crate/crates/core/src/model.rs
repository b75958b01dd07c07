//! Problem parameters, the coefficient-function catalog, and hypothesis
//! validation.
//!
//! Market liquidity (`kappa`) and volatility (`sigma`) are driven by a scalar
//! Markov factor `y` with drift `alpha` and diffusion `beta`. All four
//! functions come from a small catalog of closed forms, which keeps the bound
//! and Lipschitz hypotheses checkable by construction; a `Custom` variant
//! accepts caller-supplied evaluators for library use.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Scalar problem constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Trading horizon T > 0.
    pub horizon: f64,
    /// Temporary-impact exponent phi in (0, 1].
    pub impact_exponent: f64,
    /// Risk aversion gamma >= 0.
    pub risk_aversion: f64,
    /// Terminal inventory penalty A >= 0.
    pub penalty: f64,
    /// Initial inventory q0 (shares; sign = position direction).
    pub initial_inventory: f64,
    /// Initial mid price S0.
    pub initial_price: f64,
    /// Initial cash x0.
    pub initial_cash: f64,
    /// Initial factor level y0.
    pub initial_factor: f64,
}

impl ModelParams {
    pub fn new(
        horizon: f64,
        impact_exponent: f64,
        risk_aversion: f64,
        penalty: f64,
        initial_inventory: f64,
        initial_price: f64,
        initial_cash: f64,
        initial_factor: f64,
    ) -> Result<Self> {
        let params = Self {
            horizon,
            impact_exponent,
            risk_aversion,
            penalty,
            initial_inventory,
            initial_price,
            initial_cash,
            initial_factor,
        };
        params.check()?;
        Ok(params)
    }

    /// The fixed parameter set used by the reference experiments:
    /// T = 5, phi = 0.75, gamma = 0.05, A = 3, q0 = 15, S0 = 40, x0 = 0, y0 = 0.
    pub fn reference() -> Self {
        Self {
            horizon: 5.0,
            impact_exponent: 0.75,
            risk_aversion: 0.05,
            penalty: 3.0,
            initial_inventory: 15.0,
            initial_price: 40.0,
            initial_cash: 0.0,
            initial_factor: 0.0,
        }
    }

    pub fn check(&self) -> Result<()> {
        let fields = [
            ("horizon", self.horizon),
            ("impact_exponent", self.impact_exponent),
            ("risk_aversion", self.risk_aversion),
            ("penalty", self.penalty),
            ("initial_inventory", self.initial_inventory),
            ("initial_price", self.initial_price),
            ("initial_cash", self.initial_cash),
            ("initial_factor", self.initial_factor),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::config(format!("model.{name} must be finite, got {value}")));
            }
        }
        if self.horizon <= 0.0 {
            return Err(Error::config(format!(
                "model.horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.impact_exponent > 0.0 && self.impact_exponent <= 1.0) {
            return Err(Error::config(format!(
                "model.impact_exponent must lie in (0, 1], got {}",
                self.impact_exponent
            )));
        }
        if self.risk_aversion < 0.0 {
            return Err(Error::config(format!(
                "model.risk_aversion must be nonnegative, got {}",
                self.risk_aversion
            )));
        }
        if self.penalty < 0.0 {
            return Err(Error::config(format!(
                "model.penalty must be nonnegative, got {}",
                self.penalty
            )));
        }
        Ok(())
    }
}

/// One entry of the coefficient catalog.
#[derive(Clone)]
pub enum CoefficientSpec {
    /// Constant value `c`.
    Constant(f64),
    /// `intercept + slope * y`.
    Affine { intercept: f64, slope: f64 },
    /// `lo v ((scale * e^y) ^ hi)`: exponential clamped into [lo, hi].
    ClampedExp { scale: f64, lo: f64, hi: f64 },
    /// `(scale / kappa(y))^exponent`, evaluated against the kappa entry of the
    /// owning field set.
    PowerOfKappa { scale: f64, exponent: f64 },
    /// Caller-supplied evaluator (library extension point; not reachable from
    /// the CLI catalog).
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for CoefficientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientSpec::Constant(c) => write!(f, "Constant({c})"),
            CoefficientSpec::Affine { intercept, slope } => {
                write!(f, "Affine {{ intercept: {intercept}, slope: {slope} }}")
            }
            CoefficientSpec::ClampedExp { scale, lo, hi } => {
                write!(f, "ClampedExp {{ scale: {scale}, lo: {lo}, hi: {hi} }}")
            }
            CoefficientSpec::PowerOfKappa { scale, exponent } => {
                write!(f, "PowerOfKappa {{ scale: {scale}, exponent: {exponent} }}")
            }
            CoefficientSpec::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl CoefficientSpec {
    /// Whether this entry can be evaluated standalone (everything except
    /// `PowerOfKappa`, which needs the kappa entry).
    pub fn is_standalone(&self) -> bool {
        !matches!(self, CoefficientSpec::PowerOfKappa { .. })
    }

    fn eval_standalone(&self, y: f64) -> f64 {
        match self {
            CoefficientSpec::Constant(c) => *c,
            CoefficientSpec::Affine { intercept, slope } => intercept + slope * y,
            CoefficientSpec::ClampedExp { scale, lo, hi } => lo.max((scale * y.exp()).min(*hi)),
            CoefficientSpec::PowerOfKappa { .. } => f64::NAN,
            CoefficientSpec::Custom(f) => f(y),
        }
    }
}

/// Evaluate a standalone catalog entry at `y`.
pub fn evaluate_coefficient(spec: &CoefficientSpec, y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::numeric(format!("factor value must be finite, got {y}")));
    }
    if !spec.is_standalone() {
        return Err(Error::config(
            "power-of-kappa entries are evaluated through CoefficientFields, not standalone",
        ));
    }
    Ok(spec.eval_standalone(y))
}

/// Declared bounds for kappa and sigma.
///
/// These are model-level caps: the theory constants (penalty floor, the
/// ell constant, inventory bounds) are computed from them. The PDE solver
/// additionally derives tighter grid-effective bounds for its bracketing
/// curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientBounds {
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

impl CoefficientBounds {
    pub fn new(kappa_lo: f64, kappa_hi: f64, sigma_lo: f64, sigma_hi: f64) -> Result<Self> {
        let b = Self {
            kappa_lo,
            kappa_hi,
            sigma_lo,
            sigma_hi,
        };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [
            ("kappa_lo", self.kappa_lo),
            ("kappa_hi", self.kappa_hi),
            ("sigma_lo", self.sigma_lo),
            ("sigma_hi", self.sigma_hi),
        ] {
            if !v.is_finite() {
                return Err(Error::config(format!("coefficients.{name} must be finite, got {v}")));
            }
        }
        if !(self.kappa_lo > 0.0) || self.kappa_hi < self.kappa_lo {
            return Err(Error::config(format!(
                "kappa bounds must satisfy 0 < lo <= hi, got [{}, {}]",
                self.kappa_lo, self.kappa_hi
            )));
        }
        if self.sigma_lo < 0.0 || self.sigma_hi < self.sigma_lo {
            return Err(Error::config(format!(
                "sigma bounds must satisfy 0 <= lo <= hi, got [{}, {}]",
                self.sigma_lo, self.sigma_hi
            )));
        }
        Ok(())
    }
}

/// The four coefficient functions with their declared bounds.
#[derive(Debug, Clone)]
pub struct CoefficientFields {
    pub kappa_spec: CoefficientSpec,
    pub sigma_spec: CoefficientSpec,
    pub alpha_spec: CoefficientSpec,
    pub beta_spec: CoefficientSpec,
    pub bounds: CoefficientBounds,
}

impl CoefficientFields {
    pub fn new(
        kappa_spec: CoefficientSpec,
        sigma_spec: CoefficientSpec,
        alpha_spec: CoefficientSpec,
        beta_spec: CoefficientSpec,
        bounds: CoefficientBounds,
    ) -> Result<Self> {
        bounds.check()?;
        if !kappa_spec.is_standalone() {
            return Err(Error::config("kappa entry cannot be power-of-kappa"));
        }
        Ok(Self {
            kappa_spec,
            sigma_spec,
            alpha_spec,
            beta_spec,
            bounds,
        })
    }

    /// The coefficient set of the reference experiments:
    /// kappa(y) = 0.05 v ((0.5 e^y) ^ 5000), sigma(y) = (0.5 / kappa(y))^(-1/2),
    /// alpha(y) = -5y, beta(y) = 1.
    pub fn reference() -> Self {
        let kappa_lo = 0.05;
        let kappa_hi = 5000.0;
        let scale = 0.5;
        Self {
            kappa_spec: CoefficientSpec::ClampedExp {
                scale,
                lo: kappa_lo,
                hi: kappa_hi,
            },
            sigma_spec: CoefficientSpec::PowerOfKappa {
                scale,
                exponent: -0.5,
            },
            alpha_spec: CoefficientSpec::Affine {
                intercept: 0.0,
                slope: -5.0,
            },
            beta_spec: CoefficientSpec::Constant(1.0),
            bounds: CoefficientBounds {
                kappa_lo,
                kappa_hi,
                sigma_lo: (kappa_lo / scale).sqrt(),
                sigma_hi: (kappa_hi / scale).sqrt(),
            },
        }
    }

    #[inline]
    pub fn kappa(&self, y: f64) -> f64 {
        self.kappa_spec.eval_standalone(y)
    }

    #[inline]
    pub fn sigma(&self, y: f64) -> f64 {
        match &self.sigma_spec {
            CoefficientSpec::PowerOfKappa { scale, exponent } => {
                (scale / self.kappa(y)).powf(*exponent)
            }
            other => other.eval_standalone(y),
        }
    }

    #[inline]
    pub fn alpha(&self, y: f64) -> f64 {
        self.alpha_spec.eval_standalone(y)
    }

    #[inline]
    pub fn beta(&self, y: f64) -> f64 {
        self.beta_spec.eval_standalone(y)
    }

    /// Observed range of kappa and sigma over a set of factor values.
    ///
    /// Used by the PDE solver to build bracketing curves from the values the
    /// discrete problem actually sees (the declared caps can be far wider).
    pub fn observed_bounds(&self, ys: &[f64]) -> Result<CoefficientBounds> {
        if ys.is_empty() {
            return Err(Error::usage("observed_bounds needs at least one sample"));
        }
        let mut k_lo = f64::INFINITY;
        let mut k_hi = f64::NEG_INFINITY;
        let mut s_lo = f64::INFINITY;
        let mut s_hi = f64::NEG_INFINITY;
        for &y in ys {
            let k = self.kappa(y);
            let s = self.sigma(y);
            if !k.is_finite() || !s.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite coefficient at y = {y}: kappa = {k}, sigma = {s}"
                )));
            }
            k_lo = k_lo.min(k);
            k_hi = k_hi.max(k);
            s_lo = s_lo.min(s);
            s_hi = s_hi.max(s);
        }
        if !(k_lo > 0.0) {
            return Err(Error::numeric(format!(
                "kappa must stay positive on the sampled domain, observed minimum {k_lo}"
            )));
        }
        Ok(CoefficientBounds {
            kappa_lo: k_lo,
            kappa_hi: k_hi,
            sigma_lo: s_lo.max(0.0),
            sigma_hi: s_hi,
        })
    }
}

/// The penalty threshold from the standing hypothesis on A:
/// `(gamma * sigma_hi^(1+phi) * kappa_hi^(1/phi) / phi)^(phi/(phi+1))`.
pub fn h3_threshold(risk_aversion: f64, impact_exponent: f64, bounds: &CoefficientBounds) -> f64 {
    let phi = impact_exponent;
    let base = risk_aversion * bounds.sigma_hi.powf(1.0 + phi) * bounds.kappa_hi.powf(1.0 / phi)
        / phi;
    base.powf(phi / (phi + 1.0))
}

/// Outcome of hypothesis validation.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Declared bounds hold on the sampled domain.
    pub h2_bounds_ok: bool,
    /// Worst observed bound violation (0 when none).
    pub h2_worst_violation: f64,
    /// Penalty strictly exceeds the computed threshold.
    pub h3_ok: bool,
    /// The computed threshold.
    pub h3_threshold: f64,
    /// Human-readable findings.
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.h2_bounds_ok && self.h3_ok
    }
}

/// Check the coefficient-bound hypothesis on a deterministic sample of the
/// factor domain `[y_lo, y_hi]` and the penalty-threshold hypothesis.
///
/// Findings are reported, never thrown; a failed penalty threshold is a
/// warning because the iterative solver handles penalties below it.
pub fn validate(
    params: &ModelParams,
    fields: &CoefficientFields,
    y_lo: f64,
    y_hi: f64,
    sample_count: usize,
) -> Result<ValidationReport> {
    params.check()?;
    fields.bounds.check()?;
    if sample_count < 2 {
        return Err(Error::usage(format!(
            "sample_count must be at least 2, got {sample_count}"
        )));
    }
    if !y_lo.is_finite() || !y_hi.is_finite() || y_lo >= y_hi {
        return Err(Error::config(format!(
            "sampling domain must be a finite interval, got [{y_lo}, {y_hi}]"
        )));
    }

    let b = &fields.bounds;
    let mut worst: f64 = 0.0;
    let mut messages = Vec::new();
    let step = (y_hi - y_lo) / (sample_count - 1) as f64;
    for i in 0..sample_count {
        let y = y_lo + step * i as f64;
        let k = fields.kappa(y);
        let s = fields.sigma(y);
        if !k.is_finite() || !s.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite coefficient at y = {y}: kappa = {k}, sigma = {s}"
            )));
        }
        worst = worst
            .max(b.kappa_lo - k)
            .max(k - b.kappa_hi)
            .max(b.sigma_lo - s)
            .max(s - b.sigma_hi);
    }
    let h2_bounds_ok = worst <= 0.0;
    if h2_bounds_ok {
        messages.push(format!(
            "coefficient bounds hold on [{y_lo}, {y_hi}] ({sample_count} samples)"
        ));
    } else {
        messages.push(format!(
            "coefficient bound violated by up to {worst:e} on [{y_lo}, {y_hi}]"
        ));
    }

    let threshold = h3_threshold(params.risk_aversion, params.impact_exponent, b);
    let h3_ok = params.penalty > threshold;
    if h3_ok {
        messages.push(format!(
            "penalty {} exceeds the threshold {threshold:.6e}",
            params.penalty
        ));
    } else {
        messages.push(format!(
            "warning: penalty {} is at or below the threshold {threshold:.6e}; \
             the solver still applies, with the lower bracketing curve extending below -A",
            params.penalty
        ));
    }

    Ok(ValidationReport {
        h2_bounds_ok,
        h2_worst_violation: worst.max(0.0),
        h3_ok,
        h3_threshold: threshold,
        messages,
    })
}
