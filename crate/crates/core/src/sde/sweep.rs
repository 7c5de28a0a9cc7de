use serde::Serialize;

use super::ensemble::{annealed_moments_on, derive_setup, DerivedSetup, Statistic};
use super::path::{CouplingMode, SimSchedule};
use crate::analytic::effective_diffusivity;
use crate::error::{invalid, Result};
use crate::exec::Backend;
use crate::field::{make_mollifier, MollifierKind};
use crate::params::ModelParams;
use crate::resolvent::{mc_laplace_comparator, table_for, truncated_diffusivity, QuadratureSpec, ResolventValue};
use crate::stats::MomentEstimate;

/// Truncation depths reported next to each Monte Carlo row.
pub const SWEEP_TRUNCATIONS: [usize; 3] = [1, 2, 3];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub t_final: f64,
    /// `E|N_T|^2 / T`.
    pub n_sq_rate: MomentEstimate,
    /// `E|X_T|^2 / T`.
    pub x_sq_rate: MomentEstimate,
    /// `E[X_1 X_2]` at `T`.
    pub cross: MomentEstimate,
    /// Laplace transform of the `E|N_t|^2` series at `lambda`, when the window allows it.
    pub laplace_mc: Option<f64>,
    /// `(4 / lambda^2)` times the truncated diffusivity, for each of [`SWEEP_TRUNCATIONS`].
    pub laplace_truncated: Vec<f64>,
    pub truncated: Vec<ResolventValue>,
    /// `c^2`, the eps -> 0 limit of `E|N_T|^2 / T`.
    pub c_sq: f64,
    pub flagged_fraction: f64,
    pub unreliable: bool,
    pub bookkeeping_max: f64,
    pub setup: DerivedSetup,
    /// `E|N_t|^2` at every checkpoint.
    pub n_sq_series: Vec<MomentEstimate>,
}

pub fn weak_coupling_sweep(
    eps_list: &[f64],
    p_base: &ModelParams,
    t_final: f64,
    checkpoints: &[f64],
    n_replicas: usize,
    master_seed: u64,
) -> Result<Vec<SweepRow>> {
    weak_coupling_sweep_on(Backend::default(), eps_list, p_base, t_final, checkpoints, n_replicas, master_seed)
}

/// Runs the annealed ensemble once per `eps`, re-deriving box, grid and
/// step each time, and attaches the finite-eps resolvent comparators.
///
/// Every `eps` uses the same master seed; the environments differ anyway
/// because the spectra do.
pub fn weak_coupling_sweep_on(
    backend: Backend,
    eps_list: &[f64],
    p_base: &ModelParams,
    t_final: f64,
    checkpoints: &[f64],
    n_replicas: usize,
    master_seed: u64,
) -> Result<Vec<SweepRow>> {
    if eps_list.is_empty() {
        return Err(invalid("eps_list", "empty"));
    }
    // validate everything before any simulation starts
    let params: Vec<ModelParams> = eps_list
        .iter()
        .map(|&e| p_base.with_eps(e))
        .collect::<Result<_>>()?;
    let q = QuadratureSpec::default();
    let mut rows = Vec::with_capacity(params.len());
    for p in &params {
        let m = make_mollifier(MollifierKind::CompactBump, p.eps)?;
        let setup = derive_setup(p, &m, t_final, CouplingMode::WeakCoupling, 0.0, None)?;
        let sched = SimSchedule::new(t_final, setup.dt, checkpoints, CouplingMode::WeakCoupling, 0.0)?;
        let mom = annealed_moments_on(backend, p, setup.grid, m, &sched, n_replicas, master_seed)?;
        let t_end = *sched.checkpoints.last().unwrap();
        let rate = |stat: Statistic| {
            let e = mom.get(stat, t_end).unwrap();
            MomentEstimate {
                mean: e.mean / t_end,
                sem: e.sem / t_end,
                ..*e
            }
        };
        let n_sq_series = mom.series(Statistic::NSq);
        let times: Vec<f64> = n_sq_series.iter().map(|e| e.time).collect();
        let vals: Vec<f64> = n_sq_series.iter().map(|e| e.mean).collect();
        let laplace_mc = mc_laplace_comparator(&times, &vals, p).ok();
        let table = table_for(*SWEEP_TRUNCATIONS.iter().max().unwrap(), p)?;
        let truncated: Vec<ResolventValue> = SWEEP_TRUNCATIONS
            .iter()
            .map(|&n| truncated_diffusivity(n, p, &q, &table))
            .collect::<Result<_>>()?;
        rows.push(SweepRow {
            eps: p.eps,
            t_final: t_end,
            n_sq_rate: rate(Statistic::NSq),
            x_sq_rate: rate(Statistic::XSq),
            cross: *mom.get(Statistic::XCross, t_end).unwrap(),
            laplace_mc,
            laplace_truncated: truncated.iter().map(|r| 4.0 / (p.lambda * p.lambda) * r.value).collect(),
            truncated,
            c_sq: effective_diffusivity(p).c_sq,
            flagged_fraction: mom.flagged_fraction,
            unreliable: mom.unreliable,
            bookkeeping_max: mom.bookkeeping_max,
            setup,
            n_sq_series,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coupling_rows_vanish() {
        let p = ModelParams::new(0.0, 1.0, 0.4, 1.0).unwrap();
        let rows = weak_coupling_sweep(&[0.4, 0.3], &p, 1.0, &[0.5, 1.0], 400, 2).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.n_sq_rate.mean, 0.0);
            assert!(r.x_sq_rate.within(2.0, 4.0), "{:?}", r.x_sq_rate);
            assert!(r.laplace_mc.is_none());
            assert!(r.laplace_truncated.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn sweep_is_deterministic_and_validates_first() {
        let p = ModelParams::new(1.0, 1.0, 0.4, 1.0).unwrap();
        let a = weak_coupling_sweep(&[0.4], &p, 0.1, &[0.05, 0.1], 4, 9).unwrap();
        let b = weak_coupling_sweep(&[0.4], &p, 0.1, &[0.05, 0.1], 4, 9).unwrap();
        assert_eq!(a, b);
        assert!(a[0].n_sq_rate.mean > 0.0);
        assert!(weak_coupling_sweep(&[0.4, 0.7], &p, 0.1, &[0.1], 4, 9).is_err());
    }
}
