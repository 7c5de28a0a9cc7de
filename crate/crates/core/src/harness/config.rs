use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{make_mollifier, GridSpec, MollifierKind, MollifierSpec};
use crate::params::ModelParams;
use crate::resolvent::QuadratureSpec;
use crate::sde::{derive_setup, stable_dt, CouplingMode, DerivedSetup, ScanParams, SimSchedule};

/// Optional box and grid override; validated against the same `h <= eps/8`
/// and step-size rules as the derived defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverride {
    pub box_length: f64,
    /// Omitted: the coarsest power of two with `h <= eps/8`.
    #[serde(default)]
    pub grid_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub t_final: f64,
    /// Empty means just `t_final`.
    pub checkpoints: Vec<f64>,
    /// Upper bound on the step; the stable step is used when omitted.
    pub dt: Option<f64>,
    pub mode: CouplingMode,
    pub fixed_lambda: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            t_final: 1.0,
            checkpoints: Vec::new(),
            dt: None,
            mode: CouplingMode::WeakCoupling,
            fixed_lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticConfig {
    /// Rows `G_1 .. G_{n_max}` and `S_{n_max}` in `analytic.csv`.
    pub n_max: usize,
    /// Output points in `analytic.csv`.
    pub points: usize,
    /// Upper end of the x range; `2 pi lambda_hat^2` when omitted.
    pub x_max: Option<f64>,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        AnalyticConfig {
            n_max: 8,
            points: 129,
            x_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub eps_list: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            eps_list: vec![0.4, 0.2, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub params: ScanParams,
    pub t_list: Vec<f64>,
    pub box_length: Option<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            params: ScanParams::default(),
            t_list: crate::sde::geometric_times(10.0, 1000.0, 7),
            box_length: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventConfig {
    /// Truncation depths `1 ..= n_max` next to the base value.
    pub n_max: usize,
    /// `x_sum` vectors for the replacement residual with `H = H_plus = 1`.
    pub residual_x_sums: Vec<[f64; 2]>,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        ResolventConfig {
            n_max: 4,
            residual_x_sums: vec![[0.0, 0.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Criterion ids to run; all when empty.
    pub only: Vec<u32>,
    /// Multiplies every Monte Carlo sample count, for quick smoke runs.
    pub sample_scale: f64,
    /// Negative control: perturbs `c^2` by one part in 10^6 inside criterion 1.
    pub inject_wrong_constant: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            only: Vec::new(),
            sample_scale: 1.0,
            inject_wrong_constant: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelParams,
    pub mollifier: MollifierKind,
    pub grid: Option<GridOverride>,
    pub schedule: ScheduleConfig,
    pub n_replicas: usize,
    pub master_seed: u64,
    /// Not part of the hash or the echoed config, so outputs do not depend on where they go.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub analytic: AnalyticConfig,
    pub sweep: SweepConfig,
    pub scan: ScanConfig,
    pub quadrature: QuadratureSpec,
    pub resolvent: ResolventConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelParams::default(),
            mollifier: MollifierKind::CompactBump,
            grid: None,
            schedule: ScheduleConfig::default(),
            n_replicas: 1000,
            master_seed: 0,
            output_dir: PathBuf::from("out"),
            analytic: AnalyticConfig::default(),
            sweep: SweepConfig::default(),
            scan: ScanConfig::default(),
            quadrature: QuadratureSpec::default(),
            resolvent: ResolventConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

/// Box, grid and step actually used by a run, echoed next to the config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    pub setup: DerivedSetup,
    pub schedule: SimSchedule,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn mollifier_spec(&self) -> Result<MollifierSpec> {
        make_mollifier(self.mollifier, self.model.eps)
    }

    /// Checks everything a command may touch, before any compute.
    pub fn validate(&self) -> Result<Derived> {
        self.model.validate()?;
        self.quadrature.validate()?;
        if self.n_replicas < 2 {
            return Err(Error::Config("n_replicas must be at least 2".into()));
        }
        if self.analytic.n_max < 1 || self.analytic.points < 2 {
            return Err(Error::Config("analytic.n_max >= 1 and analytic.points >= 2 required".into()));
        }
        if let Some(x) = self.analytic.x_max {
            if !(x > 0.0) {
                return Err(Error::Config(format!("analytic.x_max = {x} must be positive")));
            }
        }
        if self.resolvent.n_max < 1 {
            return Err(Error::Config("resolvent.n_max must be >= 1".into()));
        }
        for &e in &self.sweep.eps_list {
            self.model.with_eps(e)?;
        }
        if self.scan.t_list.len() < 2 || self.scan.t_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("scan.t_list needs two or more ascending times".into()));
        }
        if !(self.verify.sample_scale > 0.0 && self.verify.sample_scale <= 1.0) {
            return Err(Error::Config("verify.sample_scale must be in (0, 1]".into()));
        }
        self.derived()
    }

    fn derived(&self) -> Result<Derived> {
        let m = self.mollifier_spec()?;
        let s = &self.schedule;
        let mut setup = derive_setup(
            &self.model,
            &m,
            s.t_final,
            s.mode,
            s.fixed_lambda,
            self.grid.map(|g| g.box_length),
        )?;
        if let Some(GridOverride {
            box_length,
            grid_n: Some(n),
        }) = self.grid
        {
            setup.grid = GridSpec::new(box_length, n, m.eps)?;
            setup.dt = stable_dt(m.eps, self.model.nu, setup.grid.spacing(), setup.drift_bound);
        }
        let dt = match s.dt {
            Some(dt) if dt > setup.dt * (1.0 + 1e-12) => {
                return Err(Error::Config(format!(
                    "schedule.dt = {dt} exceeds the stable step {}",
                    setup.dt
                )))
            }
            Some(dt) => dt,
            None => setup.dt,
        };
        let schedule = SimSchedule::new(s.t_final, dt, &s.checkpoints, s.mode, s.fixed_lambda)?;
        setup.dt = schedule.dt;
        Ok(Derived { setup, schedule })
    }

    /// Compact canonical JSON of the config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"model": {"lambda_hat": 1, "nu": 1, "eps": 0.1, "lambda": 1, "lamda": 2}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"n_replica": 3}"#).is_err());
        let c = RunConfig::from_json(r#"{"n_replicas": 3, "master_seed": 9}"#).unwrap();
        assert_eq!(c.n_replicas, 3);
        assert_eq!(c.model, ModelParams::default());
    }

    #[test]
    fn derived_defaults_are_filled_in() {
        let c = RunConfig::default();
        let d = c.validate().unwrap();
        assert!(d.setup.grid.spacing() <= c.model.eps / 8.0);
        assert_eq!(d.schedule.checkpoints, vec![c.schedule.t_final]);
        assert!(d.schedule.dt <= d.setup.dt * (1.0 + 1e-12));
    }

    #[test]
    fn overrides_are_checked() {
        let mut c = RunConfig::default();
        c.schedule.dt = Some(1.0);
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.grid = Some(GridOverride {
            box_length: 10.0,
            grid_n: Some(64),
        });
        assert!(matches!(c.validate(), Err(Error::GridTooCoarse { .. })));
        c.grid = Some(GridOverride {
            box_length: 10.0,
            grid_n: Some(1024),
        });
        assert_eq!(c.validate().unwrap().setup.grid.grid_n, 1024);
        let mut c = RunConfig::default();
        c.sweep.eps_list = vec![0.2, 0.6];
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.master_seed = 1;
        assert_ne!(a.hash(), b.hash());
        let echoed = RunConfig::from_json(&a.canonical_json()).unwrap();
        assert_eq!(echoed.hash(), a.hash());
    }
}
