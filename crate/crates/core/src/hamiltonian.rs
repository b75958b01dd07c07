//! Hamiltonian of the reduced control problem and the feedback-rate map.
//!
//! The running cost is a power law in the turnover rate, so the Legendre
//! transform has the closed form `H(p) = phi * |p|^(1 + 1/phi)` and the
//! optimal rate is `nu = -(-z / kappa)^(1/phi) * q`.

use crate::error::{Error, Result};

/// `|p|^e` computed as `exp(e * ln|p|)`, guarded at `p = 0`.
///
/// Avoids `powf` domain inconsistencies for tiny `|p|` where the exponent is
/// fractional; underflow degrades gracefully to 0.
#[inline]
pub fn abs_pow(p: f64, e: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        (e * p.abs().ln()).exp()
    }
}

/// Carries the impact exponent for repeated Hamiltonian evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianContext {
    pub phi: f64,
}

impl HamiltonianContext {
    pub fn new(phi: f64) -> Result<Self> {
        if !(phi > 0.0 && phi <= 1.0) {
            return Err(Error::config(format!(
                "impact exponent must lie in (0, 1], got {phi}"
            )));
        }
        Ok(Self { phi })
    }

    pub fn h(&self, p: f64) -> Result<f64> {
        hamiltonian_h(p, self.phi)
    }

    pub fn h_tilde(&self, p: f64) -> Result<f64> {
        hamiltonian_htilde(p, self.phi)
    }
}

/// `H(p) = phi * |p|^(1 + 1/phi)`.
///
/// Even in `p`, nonnegative, `H(0) = 0`.
pub fn hamiltonian_h(p: f64, phi: f64) -> Result<f64> {
    check_phi(phi)?;
    if !p.is_finite() {
        return Err(Error::numeric(format!("hamiltonian input p = {p}")));
    }
    Ok(phi * abs_pow(p, 1.0 + 1.0 / phi))
}

/// `H~(p) = phi * (|p| / (1 + phi))^(1 + 1/phi)`; the unscaled transform
/// satisfying `H(p) = (1 + phi)^(1 + 1/phi) * H~(p)`.
pub fn hamiltonian_htilde(p: f64, phi: f64) -> Result<f64> {
    check_phi(phi)?;
    if !p.is_finite() {
        return Err(Error::numeric(format!("hamiltonian input p = {p}")));
    }
    Ok(phi * abs_pow(p / (1.0 + phi), 1.0 + 1.0 / phi))
}

/// Optimal trading rate in feedback form: `nu = -(-z / kappa)^(1/phi) * q`.
///
/// Requires `z <= 0` (nonpositive marginal value; `z > 0` would signal a
/// speculative region excluded by the model) and `kappa > 0`.
pub fn feedback_rate(z: f64, kappa: f64, q: f64, phi: f64) -> Result<f64> {
    check_phi(phi)?;
    if z > 0.0 {
        return Err(Error::domain(format!(
            "marginal value factor must be nonpositive, got z = {z}"
        )));
    }
    if !(kappa > 0.0) {
        return Err(Error::domain(format!(
            "impact coefficient must be positive, got kappa = {kappa}"
        )));
    }
    if !z.is_finite() || !q.is_finite() {
        return Err(Error::numeric(format!("non-finite inputs z = {z}, q = {q}")));
    }
    Ok(-abs_pow(-z / kappa, 1.0 / phi) * q)
}

fn check_phi(phi: f64) -> Result<()> {
    if phi > 0.0 && phi <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "impact exponent must lie in (0, 1], got {phi}"
        )))
    }
}
