use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The four scalars every formula depends on.
///
/// `lambda_hat` is the coupling strength, `nu` the noise amplitude, `eps` the
/// mollification scale and `lambda` the Laplace (resolvent) parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub lambda_hat: f64,
    pub nu: f64,
    pub eps: f64,
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(lambda_hat: f64, nu: f64, eps: f64, lambda: f64) -> Result<Self> {
        let p = Self {
            lambda_hat,
            nu,
            eps,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    /// `lambda_hat = 0` is accepted as the degenerate zero-coupling case.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_hat >= 0.0) || !self.lambda_hat.is_finite() {
            return Err(invalid("lambda_hat", format!("{} is not >= 0", self.lambda_hat)));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(invalid("nu", format!("{} is not > 0", self.nu)));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(invalid("eps", format!("{} is not in (0, 1/2)", self.eps)));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda", format!("{} is not > 0", self.lambda)));
        }
        Ok(())
    }

    /// `4 / nu^4`, the constant that appears in every recursion.
    pub fn four_over_nu4(&self) -> f64 {
        4.0 / self.nu.powi(4)
    }

    /// Drift prefactor `lambda_hat / sqrt(log(1/eps))`.
    pub fn weak_coupling(&self) -> f64 {
        self.lambda_hat / (1.0 / self.eps).ln().sqrt()
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        self.eps = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            lambda_hat: 1.0,
            nu: 1.0,
            eps: 0.1,
            lambda: 1.0,
        }
    }
}
