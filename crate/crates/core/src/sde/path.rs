use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::VectorField;
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Drift prefactor `lambda_hat / sqrt(log(1/eps))`.
    WeakCoupling,
    /// Drift prefactor `fixed_lambda`, independent of eps.
    FixedCoupling,
}

/// Time grid of one run. `dt` divides `t_final` and every checkpoint is a
/// whole number of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSchedule {
    pub t_final: f64,
    pub dt: f64,
    pub checkpoints: Vec<f64>,
    pub mode: CouplingMode,
    pub fixed_lambda: f64,
}

/// Step size from the two stability rules: diffusive crossing of the
/// correlation length, and at most a quarter cell of drift per step.
pub fn stable_dt(eps: f64, nu: f64, h: f64, drift_bound: f64) -> f64 {
    let diffusive = if nu > 0.0 {
        0.1 * eps * eps / (nu * nu)
    } else {
        f64::INFINITY
    };
    let advective = if drift_bound > 0.0 {
        0.25 * h / drift_bound
    } else {
        f64::INFINITY
    };
    let dt = diffusive.min(advective);
    if dt.is_finite() {
        dt
    } else {
        eps * eps
    }
}

/// Typical maximum of `coupling * |omega|` over `grid_n^2` nodes for a field
/// with per-component standard deviation `component_sd`.
pub fn drift_bound(coupling: f64, component_sd: f64, grid_n: usize) -> f64 {
    let nodes = (grid_n * grid_n).max(2) as f64;
    coupling.abs() * component_sd * (2.0 * nodes.ln()).sqrt()
}

impl SimSchedule {
    /// Snap `dt_max` down so it divides `t_final`, and snap checkpoints to
    /// the nearest positive multiple of the step.
    pub fn new(
        t_final: f64,
        dt_max: f64,
        checkpoints: &[f64],
        mode: CouplingMode,
        fixed_lambda: f64,
    ) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(invalid("t_final", format!("{t_final} must be positive")));
        }
        if !(dt_max > 0.0) {
            return Err(invalid("dt", format!("{dt_max} must be positive")));
        }
        if mode == CouplingMode::FixedCoupling && !(fixed_lambda >= 0.0) {
            return Err(invalid("fixed_lambda", "must be non-negative"));
        }
        let steps = (t_final / dt_max * (1.0 - 1e-12)).ceil().max(1.0);
        let dt = t_final / steps;
        let mut snapped: Vec<f64> = Vec::new();
        for &c in checkpoints {
            if !(c > 0.0 && c <= t_final * (1.0 + 1e-12)) {
                return Err(invalid("checkpoints", format!("{c} outside (0, {t_final}]")));
            }
            let k = (c / dt).round().clamp(1.0, steps);
            let t = k * dt;
            if snapped.last().is_none_or(|&l| t > l) {
                snapped.push(t);
            } else if snapped.last() != Some(&t) {
                return Err(invalid("checkpoints", "must be ascending"));
            }
        }
        if snapped.is_empty() {
            snapped.push(steps * dt);
        }
        Ok(SimSchedule {
            t_final,
            dt,
            checkpoints: snapped,
            mode,
            fixed_lambda,
        })
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn checkpoint_steps(&self) -> Vec<usize> {
        self.checkpoints
            .iter()
            .map(|&c| (c / self.dt).round() as usize)
            .collect()
    }

    pub fn coupling(&self, p: &ModelParams) -> f64 {
        match self.mode {
            CouplingMode::WeakCoupling => p.weak_coupling(),
            CouplingMode::FixedCoupling => self.fixed_lambda,
        }
    }
}

/// Checkpointed path of one replica. Index 0 of each series is time 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<[f64; 2]>,
    pub n: Vec<[f64; 2]>,
    pub b: Vec<[f64; 2]>,
    pub replica_id: u64,
    pub env_seed: u64,
    pub noise_seed: u64,
    /// Largest `|X|` seen at any step.
    pub max_excursion: f64,
    /// Set when the path left the disc of radius `L/4`.
    pub flagged: bool,
    /// Largest relative defect of `X = N + nu B` over the checkpoints.
    pub bookkeeping_error: f64,
}

/// Euler-Maruyama for `dX = coupling * omega(X) dt + nu dB`.
///
/// `excursion_limit` is the radius past which the path is flagged as
/// contaminated by the periodic wrap, usually `L/4`.
pub fn simulate_path<F: VectorField + ?Sized>(
    field: &mut F,
    p: &ModelParams,
    sched: &SimSchedule,
    noise_seed: u64,
    excursion_limit: f64,
) -> Trajectory {
    let coupling = sched.coupling(p);
    let dt = sched.dt;
    let sdt = dt.sqrt();
    let nu = p.nu;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut x = [0.0f64; 2];
    let mut n = [0.0f64; 2];
    let mut b = [0.0f64; 2];
    let mut traj = Trajectory {
        times: vec![0.0],
        x: vec![x],
        n: vec![n],
        b: vec![b],
        replica_id: 0,
        env_seed: 0,
        noise_seed,
        max_excursion: 0.0,
        flagged: false,
        bookkeeping_error: 0.0,
    };
    let mut max_r2 = 0.0f64;
    let mut step = 0usize;
    for (&target, &t) in sched.checkpoint_steps().iter().zip(&sched.checkpoints) {
        while step < target {
            let drift = if coupling != 0.0 {
                let w = field.eval(x);
                [coupling * w[0] * dt, coupling * w[1] * dt]
            } else {
                [0.0, 0.0]
            };
            let g0: f64 = rng.sample(StandardNormal);
            let g1: f64 = rng.sample(StandardNormal);
            let db = [sdt * g0, sdt * g1];
            for c in 0..2 {
                x[c] += drift[c] + nu * db[c];
                n[c] += drift[c];
                b[c] += db[c];
            }
            max_r2 = max_r2.max(x[0] * x[0] + x[1] * x[1]);
            step += 1;
        }
        let scale = (n[0].hypot(n[1]) + nu * b[0].hypot(b[1])).max(f64::MIN_POSITIVE);
        let defect = (x[0] - n[0] - nu * b[0]).hypot(x[1] - n[1] - nu * b[1]);
        traj.bookkeeping_error = traj.bookkeeping_error.max(defect / scale);
        traj.times.push(t);
        traj.x.push(x);
        traj.n.push(n);
        traj.b.push(b);
    }
    traj.max_excursion = max_r2.sqrt();
    traj.flagged = traj.max_excursion > excursion_limit;
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Synthetic;

    fn params(lh: f64, nu: f64) -> ModelParams {
        ModelParams::new(lh, nu, 0.1, 1.0).unwrap()
    }

    #[test]
    fn schedule_snapping() {
        let s = SimSchedule::new(1.0, 0.3, &[0.25, 0.5, 1.0], CouplingMode::WeakCoupling, 0.0)
            .unwrap();
        assert_eq!(s.n_steps(), 4);
        assert_eq!(s.dt, 0.25);
        assert_eq!(s.checkpoints, vec![0.25, 0.5, 1.0]);
        let s = SimSchedule::new(1.0, 0.1, &[0.33, 0.97], CouplingMode::WeakCoupling, 0.0).unwrap();
        for c in &s.checkpoints {
            let k = c / s.dt;
            assert!((k - k.round()).abs() < 1e-9);
        }
        assert!(SimSchedule::new(1.0, 0.1, &[1.5], CouplingMode::WeakCoupling, 0.0).is_err());
        assert!(SimSchedule::new(1.0, 0.1, &[0.5, 0.2], CouplingMode::WeakCoupling, 0.0).is_err());
        assert!(SimSchedule::new(-1.0, 0.1, &[], CouplingMode::WeakCoupling, 0.0).is_err());
    }

    #[test]
    fn stability_rules() {
        assert!((stable_dt(0.1, 1.0, 0.0125, 0.0) - 1e-3).abs() < 1e-18);
        assert!((stable_dt(0.1, 1.0, 0.0125, 100.0) - 0.25 * 0.0125 / 100.0).abs() < 1e-18);
        assert_eq!(drift_bound(0.0, 3.0, 64), 0.0);
    }

    #[test]
    fn zero_coupling_is_scaled_brownian_motion() {
        let p = params(0.0, 1.7);
        let s = SimSchedule::new(1.0, 0.01, &[0.5, 1.0], CouplingMode::WeakCoupling, 0.0).unwrap();
        let mut f = Synthetic(|_: [f64; 2]| -> [f64; 2] { panic!("field must not be queried") });
        let t = simulate_path(&mut f, &p, &s, 3, f64::INFINITY);
        for k in 0..t.times.len() {
            assert_eq!(t.n[k], [0.0, 0.0]);
            for c in 0..2 {
                assert!((t.x[k][c] - 1.7 * t.b[k][c]).abs() <= 1e-14);
            }
        }
        assert!(t.bookkeeping_error <= 1e-12);
    }

    #[test]
    fn constant_field_without_noise() {
        let p = params(1.0, 1e-300);
        let s = SimSchedule::new(2.0, 0.01, &[1.0, 2.0], CouplingMode::WeakCoupling, 0.0).unwrap();
        let mut f = Synthetic(|_: [f64; 2]| [1.0, 0.0]);
        let t = simulate_path(&mut f, &p, &s, 1, f64::INFINITY);
        let c = 1.0 / 10f64.ln().sqrt();
        for (k, &time) in t.times.iter().enumerate() {
            assert!((t.x[k][0] - c * time).abs() < 1e-12, "{} vs {}", t.x[k][0], c * time);
            assert!(t.x[k][1].abs() < 1e-290);
        }
    }

    #[test]
    fn shear_flow_matches_linear_ode() {
        // dX1 = c a X2, dX2 = 0 with X2 frozen at its start; start off-axis via a shifted field
        let p = params(1.0, 1e-300);
        let a = 0.8;
        let y0 = 0.5;
        let c = p.weak_coupling();
        let errors: Vec<f64> = [0.01, 0.005]
            .iter()
            .map(|&dt| {
                let s = SimSchedule::new(1.0, dt, &[1.0], CouplingMode::WeakCoupling, 0.0).unwrap();
                // omega(x) = (a (x2 + y0), a x1 / 4): exact solution of the linear system is known
                let mut f = Synthetic(|x: [f64; 2]| [a * (x[1] + y0), 0.25 * a * x[0]]);
                let t = simulate_path(&mut f, &p, &s, 0, f64::INFINITY);
                // u = x1, v = x2 + y0: u' = c a v, v' = c a u / 4 -> rate k = c a / 2
                let k = 0.5 * c * a;
                let u = 2.0 * y0 * (k * 1.0).sinh();
                let v = y0 * (k * 1.0).cosh();
                let end = t.x.last().unwrap();
                (end[0] - u).abs().max((end[1] + y0 - v).abs())
            })
            .collect();
        assert!(errors[0] < 1e-2);
        // first order in dt
        assert!((errors[0] / errors[1] - 2.0).abs() < 0.2, "{errors:?}");
    }

    #[test]
    fn excursion_flag() {
        let p = params(1.0, 1e-300);
        let s = SimSchedule::new(1.0, 0.01, &[1.0], CouplingMode::FixedCoupling, 2.0).unwrap();
        let mut f = Synthetic(|_: [f64; 2]| [1.0, 0.0]);
        let t = simulate_path(&mut f, &p, &s, 0, 1.5);
        assert!(t.flagged);
        assert!((t.max_excursion - 2.0).abs() < 1e-12);
        let t = simulate_path(&mut f, &p, &s, 0, 2.5);
        assert!(!t.flagged);
    }

    #[test]
    fn same_seed_same_path() {
        let p = params(0.0, 1.0);
        let s = SimSchedule::new(1.0, 0.01, &[1.0], CouplingMode::WeakCoupling, 0.0).unwrap();
        let mut f = Synthetic(|_: [f64; 2]| [0.0, 0.0]);
        let a = simulate_path(&mut f, &p, &s, 42, 10.0);
        let b = simulate_path(&mut f, &p, &s, 42, 10.0);
        assert_eq!(a, b);
        assert_ne!(a.x, simulate_path(&mut f, &p, &s, 43, 10.0).x);
    }
}
