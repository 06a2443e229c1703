//! Parameterization of the oblique two-dimensional Bessel system
//!
//! ```text
//! dX = dB + (alpha / X + beta / Y - theta) dt
//! dY = dC + (gamma / X + delta / Y - eta) dt,     d<B, C> = rho dt
//! ```
//!
//! with both coordinates kept in the closed quadrant. `theta = eta = 0`
//! gives the undrifted system.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct O2bpParams {
    /// Own repulsion of X.
    pub alpha: f64,
    /// Push on X from 1/Y.
    pub beta: f64,
    /// Push on Y from 1/X.
    pub gamma: f64,
    /// Own repulsion of Y.
    pub delta: f64,
    /// Correlation of the driving Brownian motions.
    pub rho: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub eta: f64,
}

impl O2bpParams {
    /// Undrifted parameter set. Not validated; call [`O2bpParams::validate`].
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64, rho: f64) -> Self {
        Self { alpha, beta, gamma, delta, rho, theta: 0.0, eta: 0.0 }
    }

    pub fn with_drift(mut self, theta: f64, eta: f64) -> Self {
        self.theta = theta;
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.delta, self.rho, self.theta, self.eta];
        ensure!(all.iter().all(|v| v.is_finite()), InvalidParams, "parameters must be finite");
        ensure!(self.alpha > 0.0, InvalidParams, "alpha must be > 0 (got {})", self.alpha);
        ensure!(self.delta > 0.0, InvalidParams, "delta must be > 0 (got {})", self.delta);
        ensure!(self.rho.abs() <= 1.0, InvalidParams, "rho must lie in [-1, 1] (got {})", self.rho);
        ensure!(self.theta >= 0.0, InvalidParams, "theta must be >= 0 (got {})", self.theta);
        ensure!(self.eta >= 0.0, InvalidParams, "eta must be >= 0 (got {})", self.eta);
        Ok(())
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    /// `alpha * delta - beta * gamma`, the determinant of the interaction matrix.
    pub fn determinant(&self) -> f64 {
        self.alpha * self.delta - self.beta * self.gamma
    }

    pub fn has_drift(&self) -> bool {
        self.theta != 0.0 || self.eta != 0.0
    }

    /// Bessel dimension of the decoupled X coordinate, `2 alpha + 1`.
    pub fn x_dimension(&self) -> f64 {
        2.0 * self.alpha + 1.0
    }

    pub fn y_dimension(&self) -> f64 {
        2.0 * self.delta + 1.0
    }

    /// Same parameters with the cross terms and drift removed.
    pub fn decoupled(&self) -> Self {
        Self { beta: 0.0, gamma: 0.0, theta: 0.0, eta: 0.0, ..*self }
    }

    /// Exchange the roles of X and Y.
    pub fn swapped(&self) -> Self {
        Self {
            alpha: self.delta,
            beta: self.gamma,
            gamma: self.beta,
            delta: self.alpha,
            rho: self.rho,
            theta: self.eta,
            eta: self.theta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_own_terms() {
        let err = O2bpParams::new(-1.0, 0.0, 0.0, 1.0, 0.0).validate().unwrap_err();
        assert!(err.to_string().contains("alpha must be > 0"));
        let err = O2bpParams::new(1.0, 0.0, 0.0, 0.0, 0.0).validate().unwrap_err();
        assert!(err.to_string().contains("delta must be > 0"));
    }

    #[test]
    fn rejects_out_of_range_correlation() {
        assert!(O2bpParams::new(1.0, 0.0, 0.0, 1.0, 1.0).validate().is_ok());
        assert!(O2bpParams::new(1.0, 0.0, 0.0, 1.0, -1.0).validate().is_ok());
        assert!(O2bpParams::new(1.0, 0.0, 0.0, 1.0, 1.0 + 1e-9).validate().is_err());
    }

    #[test]
    fn rejects_negative_drift() {
        assert!(O2bpParams::new(1.0, 0.0, 0.0, 1.0, 0.0).with_drift(-0.1, 0.0).validate().is_err());
    }

    #[test]
    fn swap_is_involution() {
        let p = O2bpParams::new(0.3, -0.2, 0.7, 1.1, 0.4).with_drift(1.0, 2.0);
        assert_eq!(p.swapped().swapped(), p);
    }
}
