use serde::{Deserialize, Serialize};

use super::ensemble::{derive_setup, reduce, run_replica, DerivedSetup, ReplicaSummary, Statistic};
use super::path::{CouplingMode, SimSchedule};
use crate::error::{invalid, Result};
use crate::exec::{map_with, Backend};
use crate::field::{make_mollifier, FieldSampler, MollifierKind};
use crate::params::ModelParams;
use crate::stats::{pairwise_sum, MomentEstimate};

/// Fixed-coupling model `dY = lambda omega(Y) dt + nu dB` at mollifier scale `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanParams {
    pub lambda: f64,
    pub nu: f64,
    pub eps: f64,
    pub mollifier: MollifierKind,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            lambda: 1.0,
            nu: 1.0,
            eps: 1.0,
            mollifier: MollifierKind::CompactBump,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub a: f64,
    pub b: f64,
    pub b_se: f64,
    /// One-sided 95% lower confidence bound on `b`.
    pub b_lower_95: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCheck {
    pub t_lo: f64,
    pub t_hi: f64,
    /// Mean and SEM of the per-replica increment of `|Y_t|^2 / t`.
    pub diff_mean: f64,
    pub diff_sem: f64,
    pub non_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    /// `|Y_t|^2 / t` per checkpoint.
    pub rows: Vec<MomentEstimate>,
    pub fit: LinearFit,
    pub pairs: Vec<PairCheck>,
    pub flagged_fraction: f64,
    pub unreliable: bool,
    pub setup: DerivedSetup,
}

/// Least squares of `a + b sqrt(log t)` with the slope's standard error
/// taken from the spread of per-replica slopes.
pub fn fit_sqrt_log(times: &[f64], per_replica: &[Vec<f64>]) -> LinearFit {
    let s: Vec<f64> = times.iter().map(|t| t.ln().max(0.0).sqrt()).collect();
    let k = s.len() as f64;
    let s_mean = pairwise_sum(&s) / k;
    let sxx: f64 = s.iter().map(|v| (v - s_mean) * (v - s_mean)).sum();
    let w: Vec<f64> = s.iter().map(|v| (v - s_mean) / sxx).collect();
    let slopes: Vec<f64> = per_replica
        .iter()
        .map(|r| r.iter().zip(&w).map(|(y, wi)| y * wi).sum())
        .collect();
    let b_est = MomentEstimate::from_samples(0.0, &slopes);
    let means: Vec<f64> = (0..s.len())
        .map(|i| pairwise_sum(&per_replica.iter().map(|r| r[i]).collect::<Vec<_>>()) / per_replica.len() as f64)
        .collect();
    let y_mean = pairwise_sum(&means) / k;
    let a = y_mean - b_est.mean * s_mean;
    let ss_tot: f64 = means.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let ss_res: f64 = means
        .iter()
        .zip(&s)
        .map(|(y, si)| {
            let r = y - a - b_est.mean * si;
            r * r
        })
        .sum();
    LinearFit {
        a,
        b: b_est.mean,
        b_se: b_est.sem,
        b_lower_95: b_est.mean - 1.645 * b_est.sem,
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { f64::NAN },
    }
}

pub fn superdiffusivity_scan(
    sp: &ScanParams,
    t_list: &[f64],
    n_replicas: usize,
    master_seed: u64,
    box_override: Option<f64>,
) -> Result<ScanResult> {
    superdiffusivity_scan_on(Backend::default(), sp, t_list, n_replicas, master_seed, box_override)
}

pub fn superdiffusivity_scan_on(
    backend: Backend,
    sp: &ScanParams,
    t_list: &[f64],
    n_replicas: usize,
    master_seed: u64,
    box_override: Option<f64>,
) -> Result<ScanResult> {
    if t_list.len() < 2 {
        return Err(invalid("t_list", "need at least two times"));
    }
    if n_replicas < 2 {
        return Err(invalid("n_replicas", "need at least two replicas"));
    }
    if !(sp.nu > 0.0 && sp.lambda >= 0.0) {
        return Err(invalid("scan", "need nu > 0 and lambda >= 0"));
    }
    let m = make_mollifier(sp.mollifier, sp.eps)?;
    // only nu is read on the fixed-coupling path; eps may be 1 here
    let p = ModelParams {
        lambda_hat: 0.0,
        nu: sp.nu,
        eps: sp.eps,
        lambda: 1.0,
    };
    let t_final = t_list.iter().copied().fold(0.0, f64::max);
    let setup = derive_setup(&p, &m, t_final, CouplingMode::FixedCoupling, sp.lambda, box_override)?;
    let sched = SimSchedule::new(t_final, setup.dt, t_list, CouplingMode::FixedCoupling, sp.lambda)?;
    let sampler = FieldSampler::new(setup.grid, m)?;
    let summaries: Vec<ReplicaSummary> = map_with(backend, n_replicas, |r| {
        let (t, tiles) = run_replica(&sampler, &p, &sched, master_seed, r as u64);
        ReplicaSummary::from_trajectory(&t, tiles)
    });
    let moments = reduce(&summaries, &sched, setup.grid);
    let xi = Statistic::ALL.iter().position(|&s| s == Statistic::XSq).unwrap();
    let times = sched.checkpoints.clone();
    let per_replica: Vec<Vec<f64>> = summaries
        .iter()
        .map(|s| times.iter().enumerate().map(|(k, t)| s.stats[k][xi] / t).collect())
        .collect();
    let rows = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let xs: Vec<f64> = per_replica.iter().map(|r| r[k]).collect();
            MomentEstimate::from_samples(t, &xs)
        })
        .collect();
    let pairs = (0..times.len() - 1)
        .map(|k| {
            let d: Vec<f64> = per_replica.iter().map(|r| r[k + 1] - r[k]).collect();
            let e = MomentEstimate::from_samples(times[k + 1], &d);
            PairCheck {
                t_lo: times[k],
                t_hi: times[k + 1],
                diff_mean: e.mean,
                diff_sem: e.sem,
                non_decreasing: e.mean >= -3.0 * e.sem,
            }
        })
        .collect();
    Ok(ScanResult {
        rows,
        fit: fit_sqrt_log(&times, &per_replica),
        pairs,
        flagged_fraction: moments.flagged_fraction,
        unreliable: moments.unreliable,
        setup,
    })
}

/// `count` times spaced geometrically over `[t_min, t_max]`.
pub fn geometric_times(t_min: f64, t_max: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![t_max];
    }
    let r = (t_max / t_min).ln() / (count - 1) as f64;
    (0..count)
        .map(|k| {
            if k == count - 1 {
                t_max
            } else {
                t_min * (r * k as f64).exp()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_model() {
        let times = geometric_times(10.0, 1000.0, 5);
        let reps: Vec<Vec<f64>> = (0..4)
            .map(|r| {
                times
                    .iter()
                    .map(|t| 2.0 + 0.5 * t.ln().sqrt() + 0.01 * r as f64)
                    .collect()
            })
            .collect();
        let f = fit_sqrt_log(&times, &reps);
        assert!((f.b - 0.5).abs() < 1e-12);
        assert!((f.a - 2.015).abs() < 1e-12);
        assert!(f.b_se < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_times(10.0, 1000.0, 3);
        assert_eq!(g[0], 10.0);
        assert!((g[1] - 100.0).abs() < 1e-9);
        assert_eq!(g[2], 1000.0);
    }

    #[test]
    fn zero_coupling_ratio_is_flat() {
        let sp = ScanParams {
            lambda: 0.0,
            ..ScanParams::default()
        };
        let r = superdiffusivity_scan(&sp, &[1.0, 2.0, 4.0], 4000, 5, Some(20.0)).unwrap();
        for row in &r.rows {
            assert!(row.within(2.0, 4.0), "{row:?}");
        }
        assert!(r.fit.b.abs() < 4.0 * r.fit.b_se);
    }
}
