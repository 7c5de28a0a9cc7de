use std::f64::consts::PI;

use serde::Serialize;

use super::mollifier::MollifierSpec;
use super::spectral::{FieldSampler, GridSpec, VectorField};
use crate::error::{invalid, Result};
use crate::quad::{integrate, Tolerance};
use crate::rng::{self, Purpose};
use crate::stats::pairwise_sum;

/// Bessel function of the first kind `J_n(z)` for integer order, from
/// `(1/2pi) int_0^{2pi} cos(n t - z sin t) dt` with the periodic
/// trapezoid rule. The rule converges geometrically once the point
/// count exceeds about `n + |z|`.
pub fn bessel_j(n: u32, z: f64) -> f64 {
    let m = 32 + 2 * (n as usize + z.abs().ceil() as usize);
    let step = 2.0 * PI / m as f64;
    let nf = n as f64;
    let terms: Vec<f64> = (0..m)
        .map(|k| {
            let t = k as f64 * step;
            (nf * t - z * t.sin()).cos()
        })
        .collect();
    pairwise_sum(&terms) / m as f64
}

/// Exact two-point covariance `E[omega_a(x) omega_b(x + lag)]` of the
/// continuum field, by radial quadrature of the Bessel-reduced spectrum.
pub fn theoretical_covariance(m: &MollifierSpec, lag: [f64; 2]) -> Result<[[f64; 2]; 2]> {
    let r = lag[0].hypot(lag[1]);
    let phi = lag[1].atan2(lag[0]);
    let p_max = m.support() / m.eps;
    let tol = Tolerance {
        rel_tol: 1e-11,
        abs_tol: 1e-13 / (m.eps * m.eps),
        ..Tolerance::default()
    };
    // oscillation period ~ 2 pi / r
    let pieces = ((p_max * r) / PI).ceil().max(1.0) as usize;
    let bps: Vec<f64> = (1..pieces).map(|k| p_max * k as f64 / pieces as f64).collect();
    let j0 = integrate(|p| m.v_hat_eps(p) * p * bessel_j(0, p * r), 0.0, p_max, &bps, tol)?.value;
    let j2 = if r == 0.0 {
        0.0
    } else {
        integrate(|p| m.v_hat_eps(p) * p * bessel_j(2, p * r), 0.0, p_max, &bps, tol)?.value
    };
    let (c2, s2) = ((2.0 * phi).cos(), (2.0 * phi).sin());
    let off = PI * j2 * s2;
    Ok([
        [PI * (j0 + j2 * c2), off],
        [off, PI * (j0 - j2 * c2)],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceEstimate {
    pub lag: [f64; 2],
    pub mean: [[f64; 2]; 2],
    pub sem: [[f64; 2]; 2],
    /// Mean and SEM of `omega_1(x)^2 - omega_2(x + lag)^2`, the paired isotropy statistic.
    pub isotropy: (f64, f64),
    pub n_fields: usize,
    /// Largest Fourier divergence ratio seen over all draws.
    pub divergence_max: f64,
}

/// Monte Carlo estimate of `E[omega_a(x0) omega_b(x0 + lag)]` over `n_fields`
/// independent draws, averaged over `base_points` within each draw.
pub fn empirical_covariance(
    n_fields: usize,
    spec: GridSpec,
    m: MollifierSpec,
    lags: &[[f64; 2]],
    base_points: &[[f64; 2]],
    seed: u64,
) -> Result<Vec<CovarianceEstimate>> {
    if n_fields < 2 {
        return Err(invalid("n_fields", "need at least two draws"));
    }
    if base_points.is_empty() {
        return Err(invalid("base_points", "empty"));
    }
    let sampler = FieldSampler::new(spec, m)?;
    let nb = base_points.len() as f64;
    let draw = |i: usize| {
        let s = rng::derive_seed(seed, i as u64, Purpose::Field);
        let mut f = sampler.sample_lazy(s);
        let per_lag: Vec<[f64; 5]> = lags
            .iter()
            .map(|lag| {
                let mut acc = [0.0; 5];
                for x0 in base_points {
                    let a = f.eval(*x0);
                    let b = f.eval([x0[0] + lag[0], x0[1] + lag[1]]);
                    acc[0] += a[0] * b[0];
                    acc[1] += a[0] * b[1];
                    acc[2] += a[1] * b[0];
                    acc[3] += a[1] * b[1];
                    acc[4] += a[0] * a[0] - b[1] * b[1];
                }
                acc.map(|v| v / nb)
            })
            .collect();
        (per_lag, f.fourier_divergence_max)
    };
    let samples = crate::exec::map_indexed(n_fields, draw);
    let divergence_max = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(lags
        .iter()
        .enumerate()
        .map(|(l, &lag)| {
            let stat = |c: usize| {
                let xs: Vec<f64> = samples.iter().map(|s| s.0[l][c]).collect();
                let e = crate::stats::MomentEstimate::from_samples(0.0, &xs);
                (e.mean, e.sem)
            };
            let s: Vec<(f64, f64)> = (0..5).map(stat).collect();
            CovarianceEstimate {
                lag,
                mean: [[s[0].0, s[1].0], [s[2].0, s[3].0]],
                sem: [[s[0].1, s[1].1], [s[2].1, s[3].1]],
                isotropy: s[4],
                n_fields,
                divergence_max,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::mollifier::{make_mollifier, MollifierKind};

    /// Power series, fine for moderate arguments.
    fn bessel_series(n: u32, z: f64) -> f64 {
        let mut term = (0.5 * z).powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>();
        let mut sum = term;
        for k in 1..80 {
            term *= -(0.25 * z * z) / (k as f64 * (k + n) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn bessel_against_series_and_tables() {
        for n in [0, 1, 2, 5] {
            for k in 0..40 {
                let z = 0.25 * k as f64;
                assert!((bessel_j(n, z) - bessel_series(n, z)).abs() < 1e-13, "J_{n}({z})");
            }
        }
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j(2, 7.3) + 0.265_594_911_883_436_9).abs() < 1e-14);
        assert!((bessel_j(0, 30.0) + 0.086_367_983_581_040_21).abs() < 1e-14);
    }

    #[test]
    fn covariance_at_zero_lag() {
        let m = make_mollifier(MollifierKind::CompactBump, 0.2).unwrap();
        let c = theoretical_covariance(&m, [0.0, 0.0]).unwrap();
        let v = m.point_variance().unwrap();
        assert!((c[0][0] - v).abs() < 1e-9 * v);
        assert!((c[1][1] - v).abs() < 1e-9 * v);
        assert_eq!(c[0][1], 0.0);
    }

    #[test]
    fn covariance_symmetries() {
        let m = make_mollifier(MollifierKind::CompactBump, 0.2).unwrap();
        let c0 = theoretical_covariance(&m, [0.0, 0.0]).unwrap();
        for lag in [[0.05, 0.0], [0.1, 0.13], [-0.3, 0.2], [0.7, -0.9]] {
            let c = theoretical_covariance(&m, lag).unwrap();
            let cm = theoretical_covariance(&m, [-lag[0], -lag[1]]).unwrap();
            for a in 0..2 {
                for b in 0..2 {
                    assert!((c[a][b] - cm[b][a]).abs() < 1e-9 * c0[0][0]);
                }
            }
            assert!(c[0][0] + c[1][1] <= c0[0][0] + c0[1][1]);
        }
    }

    #[test]
    fn covariance_by_direct_two_dimensional_quadrature() {
        // independent route: polar quadrature of V_hat (I - p p^T/|p|^2) cos(p . lag)
        let m = make_mollifier(MollifierKind::CompactBump, 0.5).unwrap();
        let lag = [0.3, 0.45];
        let tol = Tolerance {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            ..Tolerance::default()
        };
        let entry = |a: usize, b: usize| {
            integrate(
                |rho| {
                    let inner = integrate(
                        |th| {
                            let u = [th.cos(), th.sin()];
                            let proj = if a == b { 1.0 } else { 0.0 } - u[a] * u[b];
                            proj * (rho * (u[0] * lag[0] + u[1] * lag[1])).cos()
                        },
                        0.0,
                        2.0 * PI,
                        &[],
                        tol,
                    )
                    .unwrap()
                    .value;
                    m.v_hat_eps(rho) * rho * inner
                },
                0.0,
                2.0,
                &[],
                tol,
            )
            .unwrap()
            .value
        };
        let c = theoretical_covariance(&m, lag).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let d = entry(a, b);
                assert!((c[a][b] - d).abs() < 1e-8 * (1.0 + d.abs()), "{a}{b}: {} vs {d}", c[a][b]);
            }
        }
    }

    #[test]
    fn small_sample_covariance_is_sane() {
        let m = make_mollifier(MollifierKind::CompactBump, 0.25).unwrap();
        let g = GridSpec::new(8.0, 256, 0.25).unwrap();
        let est = empirical_covariance(200, g, m, &[[0.0, 0.0]], &[[0.0, 0.0], [4.0, 4.0]], 1).unwrap();
        let e = &est[0];
        assert!(e.divergence_max <= 1e-12);
        let v = m.point_variance().unwrap();
        assert!((e.mean[0][0] - v).abs() < 5.0 * e.sem[0][0] + 0.02 * v);
        assert_eq!(e.mean[0][1], e.mean[1][0]);
        assert!(empirical_covariance(1, g, m, &[[0.0, 0.0]], &[[0.0, 0.0]], 1).is_err());
    }
}
