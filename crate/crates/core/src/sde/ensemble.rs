use serde::{Deserialize, Serialize};

use super::path::{drift_bound, simulate_path, stable_dt, CouplingMode, SimSchedule, Trajectory};
use crate::analytic::effective_diffusivity;
use crate::error::{invalid, Result};
use crate::exec::{map_with, Backend};
use crate::field::{FieldSampler, GridSpec, MollifierSpec, Synthetic};
use crate::params::ModelParams;
use crate::rng::{derive_seed, Purpose};
use crate::stats::MomentEstimate;

/// Per-replica statistics recorded at each checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `|N_t|^2`
    NSq,
    /// `|X_t|^2`
    XSq,
    /// `X_1 X_2`
    XCross,
    /// `N_1`
    N1,
    /// `X_1^2`
    X1Sq,
    /// `X_2^2`
    X2Sq,
}

impl Statistic {
    pub const ALL: [Statistic; 6] = [
        Statistic::NSq,
        Statistic::XSq,
        Statistic::XCross,
        Statistic::N1,
        Statistic::X1Sq,
        Statistic::X2Sq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::NSq => "n_sq",
            Statistic::XSq => "x_sq",
            Statistic::XCross => "x1_x2",
            Statistic::N1 => "n1",
            Statistic::X1Sq => "x1_sq",
            Statistic::X2Sq => "x2_sq",
        }
    }

    pub fn of(self, x: [f64; 2], n: [f64; 2]) -> f64 {
        match self {
            Statistic::NSq => n[0] * n[0] + n[1] * n[1],
            Statistic::XSq => x[0] * x[0] + x[1] * x[1],
            Statistic::XCross => x[0] * x[1],
            Statistic::N1 => n[0],
            Statistic::X1Sq => x[0] * x[0],
            Statistic::X2Sq => x[1] * x[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub stat: Statistic,
    pub estimate: MomentEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnealedMoments {
    pub rows: Vec<MomentRow>,
    /// `samples[checkpoint][stat][replica]`, kept for paired statistics.
    #[serde(skip)]
    pub samples: Vec<Vec<Vec<f64>>>,
    pub n_replicas: usize,
    pub flagged_fraction: f64,
    /// More than 1% of replicas left the trusted part of the box.
    pub unreliable: bool,
    pub bookkeeping_max: f64,
    pub max_excursion: f64,
    pub grid: GridSpec,
    pub dt: f64,
}

impl AnnealedMoments {
    pub fn get(&self, stat: Statistic, t: f64) -> Option<&MomentEstimate> {
        self.rows
            .iter()
            .find(|r| r.stat == stat && (r.estimate.time - t).abs() <= 1e-9 * t.max(1.0))
            .map(|r| &r.estimate)
    }

    pub fn series(&self, stat: Statistic) -> Vec<MomentEstimate> {
        self.rows
            .iter()
            .filter(|r| r.stat == stat)
            .map(|r| r.estimate)
            .collect()
    }
}

/// Summary of one replica: checkpoint statistics without the full path.
#[derive(Debug, Clone)]
pub struct ReplicaSummary {
    pub stats: Vec<[f64; 6]>,
    pub flagged: bool,
    pub bookkeeping_error: f64,
    pub max_excursion: f64,
    pub tiles_built: usize,
}

impl ReplicaSummary {
    pub fn from_trajectory(t: &Trajectory, tiles_built: usize) -> Self {
        let stats = (1..t.times.len())
            .map(|k| Statistic::ALL.map(|s| s.of(t.x[k], t.n[k])))
            .collect();
        ReplicaSummary {
            stats,
            flagged: t.flagged,
            bookkeeping_error: t.bookkeeping_error,
            max_excursion: t.max_excursion,
            tiles_built,
        }
    }
}

/// One annealed replica: fresh environment and fresh noise from the
/// (master seed, replica) streams.
pub fn run_replica(
    sampler: &FieldSampler,
    p: &ModelParams,
    sched: &SimSchedule,
    master_seed: u64,
    replica: u64,
) -> (Trajectory, usize) {
    let env_seed = derive_seed(master_seed, replica, Purpose::Field);
    let noise_seed = derive_seed(master_seed, replica, Purpose::Noise);
    let limit = 0.25 * sampler.grid.box_length;
    let (mut t, tiles) = if sched.coupling(p) == 0.0 {
        let mut zero = Synthetic(|_: [f64; 2]| [0.0, 0.0]);
        (simulate_path(&mut zero, p, sched, noise_seed, limit), 0)
    } else {
        let mut field = sampler.sample_lazy(env_seed);
        let t = simulate_path(&mut field, p, sched, noise_seed, limit);
        (t, field.tiles_built())
    };
    t.replica_id = replica;
    t.env_seed = env_seed;
    (t, tiles)
}

pub fn annealed_moments(
    p: &ModelParams,
    grid: GridSpec,
    m: MollifierSpec,
    sched: &SimSchedule,
    n_replicas: usize,
    master_seed: u64,
) -> Result<AnnealedMoments> {
    annealed_moments_on(Backend::default(), p, grid, m, sched, n_replicas, master_seed)
}

pub fn annealed_moments_on(
    backend: Backend,
    p: &ModelParams,
    grid: GridSpec,
    m: MollifierSpec,
    sched: &SimSchedule,
    n_replicas: usize,
    master_seed: u64,
) -> Result<AnnealedMoments> {
    if n_replicas < 2 {
        return Err(invalid("n_replicas", "need at least two replicas"));
    }
    if sched.mode == CouplingMode::WeakCoupling && (m.eps - p.eps).abs() > 1e-15 * p.eps {
        return Err(invalid("eps", "mollifier scale differs from model eps"));
    }
    let sampler = FieldSampler::new(grid, m)?;
    let summaries = map_with(backend, n_replicas, |r| {
        let (t, tiles) = run_replica(&sampler, p, sched, master_seed, r as u64);
        ReplicaSummary::from_trajectory(&t, tiles)
    });
    Ok(reduce(&summaries, sched, grid))
}

/// Fixed-order reduction of replica summaries.
pub fn reduce(summaries: &[ReplicaSummary], sched: &SimSchedule, grid: GridSpec) -> AnnealedMoments {
    let n = summaries.len();
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (k, &t) in sched.checkpoints.iter().enumerate() {
        let mut per_stat = Vec::new();
        for (si, &stat) in Statistic::ALL.iter().enumerate() {
            let xs: Vec<f64> = summaries.iter().map(|s| s.stats[k][si]).collect();
            rows.push(MomentRow {
                stat,
                estimate: MomentEstimate::from_samples(t, &xs),
            });
            per_stat.push(xs);
        }
        samples.push(per_stat);
    }
    let flagged = summaries.iter().filter(|s| s.flagged).count();
    let flagged_fraction = flagged as f64 / n as f64;
    AnnealedMoments {
        rows,
        samples,
        n_replicas: n,
        flagged_fraction,
        unreliable: flagged_fraction > 0.01,
        bookkeeping_max: summaries.iter().map(|s| s.bookkeeping_error).fold(0.0, f64::max),
        max_excursion: summaries.iter().map(|s| s.max_excursion).fold(0.0, f64::max),
        grid,
        dt: sched.dt,
    }
}

/// Box, grid and step derived from the model and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedSetup {
    pub grid: GridSpec,
    pub dt: f64,
    pub coupling: f64,
    /// Variance rate used to size the box.
    pub variance_rate: f64,
    pub drift_bound: f64,
}

/// Default box `L = 10 sqrt(rate * T)`, the coarsest power-of-two grid with
/// `h <= eps/8`, and the stable step.
///
/// In weak coupling the rate is `c^2 + 2 nu^2`. In fixed coupling it uses
/// the same formula with a running coupling `lambda^2 log(sqrt(T)/eps)`,
/// which tracks the logarithmic growth of the effective diffusivity.
pub fn derive_setup(
    p: &ModelParams,
    m: &MollifierSpec,
    t_final: f64,
    mode: CouplingMode,
    fixed_lambda: f64,
    box_override: Option<f64>,
) -> Result<DerivedSetup> {
    let (coupling, rate) = match mode {
        CouplingMode::WeakCoupling => (
            p.weak_coupling(),
            effective_diffusivity(p).total_variance_rate,
        ),
        CouplingMode::FixedCoupling => {
            let running = fixed_lambda * fixed_lambda * (t_final.sqrt() / m.eps).ln().max(0.0);
            let q = ModelParams {
                lambda_hat: running.sqrt(),
                ..*p
            };
            (fixed_lambda, effective_diffusivity(&q).total_variance_rate)
        }
    };
    let box_length = box_override.unwrap_or(10.0 * (rate * t_final).sqrt());
    let grid = GridSpec::resolving(box_length, m.eps)?;
    let sampler = FieldSampler::new(grid, *m)?;
    let sd = sampler.lattice_component_variance().sqrt();
    let bound = drift_bound(coupling, sd, grid.grid_n);
    let dt = stable_dt(m.eps, p.nu, grid.spacing(), bound);
    Ok(DerivedSetup {
        grid,
        dt,
        coupling,
        variance_rate: rate,
        drift_bound: bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_mollifier, MollifierKind};

    fn setup(lh: f64) -> (ModelParams, GridSpec, MollifierSpec) {
        let p = ModelParams::new(lh, 1.0, 0.25, 1.0).unwrap();
        let m = make_mollifier(MollifierKind::CompactBump, 0.25).unwrap();
        (p, GridSpec::new(8.0, 256, 0.25).unwrap(), m)
    }

    #[test]
    fn zero_coupling_brownian_statistics() {
        let (p, _, m) = setup(0.0);
        let g = GridSpec::new(16.0, 512, 0.25).unwrap();
        let s = SimSchedule::new(1.0, 0.01, &[0.5, 1.0], CouplingMode::WeakCoupling, 0.0).unwrap();
        let r = annealed_moments(&p, g, m, &s, 2000, 7).unwrap();
        let x = r.get(Statistic::XSq, 1.0).unwrap();
        assert!(x.within(2.0, 4.0), "{x:?}");
        assert!(r.get(Statistic::XCross, 1.0).unwrap().within(0.0, 4.0));
        assert_eq!(r.get(Statistic::NSq, 1.0).unwrap().mean, 0.0);
        // excursions past L/4 = 4 are rare for unit Brownian motion up to time 1
        assert!(r.flagged_fraction < 0.01 && !r.unreliable);
        assert!(r.bookkeeping_max <= 1e-12);
    }

    #[test]
    fn backends_agree_bit_for_bit() {
        let (p, g, m) = setup(1.0);
        let s = SimSchedule::new(0.2, 0.002, &[0.1, 0.2], CouplingMode::WeakCoupling, 0.0).unwrap();
        let a = annealed_moments_on(Backend::Parallel, &p, g, m, &s, 8, 3).unwrap();
        let b = annealed_moments_on(Backend::Sequential, &p, g, m, &s, 8, 3).unwrap();
        assert_eq!(a.rows, b.rows);
        assert!(a.get(Statistic::NSq, 0.2).unwrap().mean > 0.0);
        assert!(a.bookkeeping_max <= 1e-12);
    }

    #[test]
    fn rejects_mismatched_eps_and_tiny_ensembles() {
        let (p, g, _) = setup(1.0);
        let m2 = make_mollifier(MollifierKind::CompactBump, 0.2).unwrap();
        let s = SimSchedule::new(0.1, 0.01, &[0.1], CouplingMode::WeakCoupling, 0.0).unwrap();
        assert!(annealed_moments(&p, GridSpec::new(8.0, 512, 0.2).unwrap(), m2, &s, 4, 0).is_err());
        let m = make_mollifier(MollifierKind::CompactBump, 0.25).unwrap();
        assert!(annealed_moments(&p, g, m, &s, 1, 0).is_err());
    }

    #[test]
    fn derived_setup_respects_rules() {
        let p = ModelParams::new(1.0, 1.0, 0.2, 1.0).unwrap();
        let m = make_mollifier(MollifierKind::CompactBump, 0.2).unwrap();
        let d = derive_setup(&p, &m, 1.0, CouplingMode::WeakCoupling, 0.0, None).unwrap();
        let rate = effective_diffusivity(&p).total_variance_rate;
        assert!((d.grid.box_length - 10.0 * rate.sqrt()).abs() < 1e-12);
        assert!(d.grid.spacing() <= 0.2 / 8.0);
        assert!(d.dt <= 0.1 * 0.04 + 1e-18);
        assert!(d.dt * d.drift_bound <= 0.25 * d.grid.spacing() * (1.0 + 1e-12));
    }
}
