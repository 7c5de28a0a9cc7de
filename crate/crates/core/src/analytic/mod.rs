//! Closed-form and recursively defined scalar functions: the logarithmic
//! rescaling `L^eps`, the `G_j` recursion and its limit `G`, the `G_i^+`
//! families with their sums `S_n`, and the limiting diffusivity constants.

mod table;

pub use table::{
    g_plus_bound, g_plus_table, g_table, g_table_refined, s_n, s_n_grid, AnalyticTable,
    TableKind, DEFAULT_GRID_SIZE, GRID_CAP,
};

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// `L^eps(x) = (pi lambda_hat^2 / |log eps^2|) * log(1 + 1/(eps^2 x))`.
pub fn l_eps(x: f64, p: &ModelParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain { what: "L^eps", x });
    }
    let e2 = p.eps * p.eps;
    Ok(PI * p.lambda_hat * p.lambda_hat / e2.ln().abs() * (1.0 / (e2 * x)).ln_1p())
}

/// Limit of the `G_j` recursion, `(nu^4/4)(sqrt(8x/nu^4 + 1) - 1)`.
pub fn g_closed(x: f64, p: &ModelParams) -> f64 {
    let s = s_closed(x, p);
    // algebraically equal to the closed form, without the cancellation at small x
    2.0 * x / (s + 1.0)
}

/// `G'(x) = 1 / (1 + (4/nu^4) G(x))`.
pub fn g_closed_prime(x: f64, p: &ModelParams) -> f64 {
    1.0 / (1.0 + p.four_over_nu4() * g_closed(x, p))
}

/// `S(x) = sqrt(8x/nu^4 + 1)`.
pub fn s_closed(x: f64, p: &ModelParams) -> f64 {
    (8.0 * x / p.nu.powi(4) + 1.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveDiffusivity {
    pub c: f64,
    pub c_sq: f64,
    /// Limiting growth rate of `E|X_t|^2`, `c^2 + 2 nu^2`.
    pub total_variance_rate: f64,
}

/// `c(nu)^2 = 4 (sqrt(2 pi lambda_hat^2 + nu^4/4) - nu^2/2)`.
pub fn effective_diffusivity(p: &ModelParams) -> EffectiveDiffusivity {
    let a = 2.0 * PI * p.lambda_hat * p.lambda_hat;
    let b = p.nu.powi(4) / 4.0;
    // rationalised: sqrt(a + b) - sqrt(b) = a / (sqrt(a + b) + sqrt(b))
    let c_sq = 4.0 * a / ((a + b).sqrt() + b.sqrt());
    EffectiveDiffusivity {
        c: c_sq.sqrt(),
        c_sq,
        total_variance_rate: c_sq + 2.0 * p.nu * p.nu,
    }
}

/// Limit of `int_0^inf e^{-lambda t} E|N_t|^2 dt`, which is `c^2 / lambda^2`.
pub fn laplace_limit(p: &ModelParams) -> f64 {
    effective_diffusivity(p).c_sq / (p.lambda * p.lambda)
}

/// Default upper end of the tabulation range: twice the only evaluation
/// point `pi lambda_hat^2` that the limits need.
pub fn default_x_max(p: &ModelParams) -> f64 {
    let x = 2.0 * PI * p.lambda_hat * p.lambda_hat;
    if x > 0.0 {
        x
    } else {
        1.0
    }
}

/// `(2/nu^2) G_{n+1}(pi lambda_hat^2)`, the epsilon -> 0 limit of the
/// n-step truncated diffusivity.
pub fn truncated_limit(n: usize, p: &ModelParams) -> Result<f64> {
    if n < 1 {
        return Err(Error::Index(format!("truncation index n = {n} must be >= 1")));
    }
    let x = PI * p.lambda_hat * p.lambda_hat;
    if x == 0.0 {
        return Ok(0.0);
    }
    let table = g_table(n + 1, default_x_max(p), DEFAULT_GRID_SIZE, p)?;
    Ok(2.0 / (p.nu * p.nu) * table.eval(n + 1, x)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ModelParams {
        ModelParams::new(1.0, 1.0, 0.1, 1.0).unwrap()
    }

    #[test]
    fn l_eps_at_inverse_eps_squared() {
        let p = unit();
        let v = l_eps(100.0, &p).unwrap();
        // pi log 2 / log 100, evaluated independently
        assert!((v - 0.472_856_811_444_065_3).abs() < 1e-12, "{v}");
    }

    #[test]
    fn l_eps_domain_and_limits() {
        let p = unit();
        assert!(l_eps(0.0, &p).is_err());
        assert!(l_eps(-1.0, &p).is_err());
        assert!(l_eps(1e300, &p).unwrap() < 1e-290);
        // fixed x, eps -> 0 tends to pi lambda_hat^2
        let small = ModelParams::new(1.0, 1.0, 1e-150, 1.0).unwrap();
        assert!((l_eps(1.0, &small).unwrap() - PI).abs() < 1e-2);
    }

    #[test]
    fn l_eps_strictly_decreasing() {
        let p = unit();
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let v = l_eps(k as f64 * 0.37, &p).unwrap();
            assert!(v < prev && v >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn closed_forms_at_pi() {
        let p = unit();
        assert_eq!(g_closed(0.0, &p), 0.0);
        assert!((g_closed(PI, &p) - 1.028_004_822_680_609_8).abs() < 1e-12);
        assert!((s_closed(PI, &p) - 5.112_019_290_722_439).abs() < 1e-12);
        assert_eq!(s_closed(0.0, &p), 1.0);
    }

    #[test]
    fn g_closed_solves_its_ode() {
        for nu in [0.5, 1.0, 2.0] {
            let p = ModelParams::new(1.0, nu, 0.1, 1.0).unwrap();
            let g = |x: f64| g_closed(x, &p);
            let stencil = |x: f64, h: f64| {
                (8.0 * (g(x + h) - g(x - h)) - (g(x + 2.0 * h) - g(x - 2.0 * h))) / (12.0 * h)
            };
            let h = 1e-2 / p.four_over_nu4();
            for k in 1..100 {
                let x = k as f64 * 0.07;
                // Richardson step on the five-point stencil
                let d = (16.0 * stencil(x, 0.5 * h) - stencil(x, h)) / 15.0;
                let residual = (d * (1.0 + p.four_over_nu4() * g_closed(x, &p)) - 1.0).abs();
                assert!(residual < 1e-10, "nu={nu} x={x} residual={residual}");
            }
        }
    }

    #[test]
    fn diffusivity_reference_values() {
        let d = effective_diffusivity(&unit());
        assert!((d.c_sq - 8.224_038_581_444_878).abs() < 1e-10, "{}", d.c_sq);
        assert!((d.c - 2.867_758_459_397_318).abs() < 1e-10, "{}", d.c);
        assert!((d.total_variance_rate - 10.224_038_581_444_878).abs() < 1e-10);
        let zero = ModelParams::new(0.0, 1.3, 0.1, 1.0).unwrap();
        let d0 = effective_diffusivity(&zero);
        assert_eq!(d0.c_sq, 0.0);
        assert!((d0.total_variance_rate - 2.0 * 1.69).abs() < 1e-12);
        assert_eq!(laplace_limit(&zero), 0.0);
    }

    #[test]
    fn truncated_limit_small_n() {
        let p = unit();
        assert!((truncated_limit(1, &p).unwrap() - 2.0 * PI).abs() < 1e-11);
        let g3 = 0.25 * (1.0 + 4.0 * PI).ln();
        assert!((truncated_limit(2, &p).unwrap() - 2.0 * g3).abs() < 1e-11);
        assert!((2.0 * g3 - 1.303_796_990_752_464).abs() < 1e-12);
        assert!(truncated_limit(0, &p).is_err());
    }
}
