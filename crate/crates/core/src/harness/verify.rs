//! The acceptance criteria, shared by `curlgff verify` and the `acceptance`
//! test target. Every report is a pure function of the config, so
//! `verify.json` is reproducible byte for byte.

use std::f64::consts::PI;

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::commands::{run, same_outputs, Command};
use super::config::{GridOverride, RunConfig, VerifyConfig};
use crate::analytic::{effective_diffusivity, g_closed, g_table, laplace_limit, s_closed, DEFAULT_GRID_SIZE};
use crate::error::{Error, Result};
use crate::exec::with_threads;
use crate::field::{empirical_covariance, make_mollifier, theoretical_covariance, GridSpec, MollifierKind};
use crate::params::ModelParams;
use crate::resolvent::{
    base_diffusivity, replacement_residual, table_for, truncated_diffusivity, QuadratureSpec,
};
use crate::rng::{stream, Purpose};
use crate::sde::{
    annealed_moments, derive_setup, geometric_times, superdiffusivity_scan, weak_coupling_sweep,
    CouplingMode, ScanParams, SimSchedule, Statistic,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest replacement residual with `H = H_plus = 1`, `x_sum = 0`, over
/// eps in {1e-1, ..., 1e-4} at unit parameters (10.2522, reached at 1e-4,
/// identical from an independent scipy evaluation), rounded up.
pub const REPLACEMENT_RESIDUAL_BOUND: f64 = 10.3;

/// Seed shared by all stochastic criteria.
const VERIFY_SEED: u64 = 20_240_601;

pub const CRITERIA: [(u32, &str); 10] = [
    (1, "analytic identity suite"),
    (2, "G recursion convergence and bracketing"),
    (3, "base diffusivity limit"),
    (4, "truncated diffusivity n = 2"),
    (5, "field covariance oracle"),
    (6, "pure diffusion exactness"),
    (7, "weak coupling trend"),
    (8, "superdiffusivity scan"),
    (9, "replacement residual stability"),
    (10, "determinism"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    pub pass: bool,
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// The three closed-form identities tying `c^2`, `S` and `G` together,
/// each to 1e-10 relative. `inject` perturbs `c^2` as a negative control.
pub fn identity_checks(p: &ModelParams, inject: bool) -> Vec<IdentityCheck> {
    let mut c2 = effective_diffusivity(p).c_sq;
    if inject {
        c2 *= 1.0 + 1e-6;
    }
    let x = PI * p.lambda_hat * p.lambda_hat;
    let nu2 = p.nu * p.nu;
    let check = |name, lhs: f64, rhs: f64| {
        let rel_err = rel_diff(lhs, rhs);
        IdentityCheck {
            name,
            lhs,
            rhs,
            rel_err,
            pass: rel_err <= 1e-10,
        }
    };
    vec![
        check("lambda^2 laplace_limit = c^2", p.lambda * p.lambda * laplace_limit(p), c2),
        check("c^2 / (2 nu^2) = S(pi lambda_hat^2) - 1", c2 / (2.0 * nu2), s_closed(x, p) - 1.0),
        check("(2 / nu^2) G(pi lambda_hat^2) = c^2 / 4", 2.0 / nu2 * g_closed(x, p), c2 / 4.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub measured: Value,
    pub tolerance: String,
    pub detail: String,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} ({}): {} [tolerance: {}]",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub all_pass: bool,
    pub criteria: Vec<CriterionReport>,
}

pub fn run_criteria(vc: &VerifyConfig) -> Result<VerifyReport> {
    let criteria = CRITERIA
        .iter()
        .filter(|(id, _)| vc.only.is_empty() || vc.only.contains(id))
        .map(|&(id, _)| run_criterion(id, vc))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        all_pass: criteria.iter().all(|c| c.pass),
        criteria,
    })
}

pub fn run_criterion(id: u32, vc: &VerifyConfig) -> Result<CriterionReport> {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|c| c.1)
        .ok_or_else(|| Error::Config(format!("no criterion {id}")))?;
    let (pass, measured, tolerance, detail) = match id {
        1 => identities(vc),
        2 => g_recursion()?,
        3 => base_limit()?,
        4 => truncated_two()?,
        5 => covariance(vc)?,
        6 => pure_diffusion(vc)?,
        7 => weak_coupling(vc)?,
        8 => superdiffusivity(vc)?,
        9 => residual_stability()?,
        _ => determinism()?,
    };
    Ok(CriterionReport {
        id,
        name,
        pass,
        measured,
        tolerance: tolerance.to_string(),
        detail,
    })
}

type Outcome = (bool, Value, &'static str, String);

fn scaled(n: usize, vc: &VerifyConfig) -> usize {
    ((n as f64 * vc.sample_scale).round() as usize).max(2)
}

fn unit(eps: f64) -> Result<ModelParams> {
    ModelParams::new(1.0, 1.0, eps, 1.0)
}

fn identities(vc: &VerifyConfig) -> Outcome {
    let mut rng = stream(VERIFY_SEED, 1, Purpose::Oracle);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..100 {
        let p = ModelParams {
            lambda_hat: rng.random_range(0.1..3.0),
            nu: rng.random_range(0.3..3.0),
            eps: rng.random_range(1e-6..0.49),
            lambda: rng.random_range(0.1..5.0),
        };
        for c in identity_checks(&p, vc.inject_wrong_constant) {
            worst = worst.max(c.rel_err);
            failures += usize::from(!c.pass);
        }
    }
    (
        failures == 0,
        json!({ "draws": 100, "max_rel_err": worst, "failures": failures }),
        "1e-10 relative, 100 draws",
        format!("max relative error {worst:e} over 300 identity checks"),
    )
}

fn g_recursion() -> Result<Outcome> {
    let p = unit(0.1)?;
    let n_max = 60;
    let t = g_table(n_max, PI, DEFAULT_GRID_SIZE, &p)?;
    let gap = (t.eval(n_max, PI)? - g_closed(PI, &p)).abs();
    let slack = 10.0 * t.tolerance + 1e-14;
    let mut bracket_violations = 0;
    let mut cauchy_violations = 0;
    let mut log_fact = 0.0f64;
    for j in 1..=n_max {
        if j >= 2 {
            log_fact += ((j - 1) as f64).ln();
            let bound = ((j - 2) as f64 * 4f64.ln() + (j - 1) as f64 * PI.ln() - log_fact).exp();
            cauchy_violations += (0..t.x_grid.len())
                .filter(|&k| (t.values[j][k] - t.values[j - 1][k]).abs() > bound + slack)
                .count();
        }
        for (k, &x) in t.x_grid.iter().enumerate() {
            let g = g_closed(x, &p);
            let ok = if j % 2 == 1 { t.values[j][k] <= g + slack } else { t.values[j][k] >= g - slack };
            bracket_violations += usize::from(!ok);
        }
    }
    Ok((
        gap <= 1e-6 && bracket_violations == 0 && cauchy_violations == 0,
        json!({
            "gap_60": gap,
            "bracket_violations": bracket_violations,
            "cauchy_violations": cauchy_violations,
            "grid_points": t.x_grid.len(),
            "table_error_estimate": t.tolerance,
        }),
        "|G_60(pi) - G(pi)| <= 1e-6; bracketing and Cauchy bound at every node, slack 10x table error",
        format!("gap {gap:e}, {bracket_violations} bracket and {cauchy_violations} Cauchy violations"),
    ))
}

fn base_limit() -> Result<Outcome> {
    let q = QuadratureSpec::default();
    let target = 2.0 * PI;
    let mut rows = Vec::new();
    let mut pass = true;
    for (eps, tol) in [(1e-3, 0.05), (1e-6, 0.025)] {
        let p = unit(eps)?;
        let b = base_diffusivity(&p, &q)?.value;
        let t1 = truncated_diffusivity(1, &p, &q, &table_for(1, &p)?)?.value;
        let dev = (b - target).abs() / target;
        let same = rel_diff(b, t1);
        pass &= dev <= tol && same <= 1e-8;
        rows.push(json!({ "eps": eps, "base": b, "rel_dev": dev, "truncated_1": t1, "rel_diff_n1": same }));
    }
    let detail = format!(
        "base/2pi - 1 = {:.4} at 1e-3, {:.4} at 1e-6",
        (rows[0]["base"].as_f64().unwrap() / target - 1.0),
        (rows[1]["base"].as_f64().unwrap() / target - 1.0)
    );
    Ok((pass, Value::Array(rows), "5% at eps 1e-3, 2.5% at eps 1e-6; n = 1 equality 1e-8 relative", detail))
}

fn truncated_two() -> Result<Outcome> {
    let q = QuadratureSpec::default();
    let target = 2.0 * 0.651_898_495_376_232;
    let mut devs = Vec::new();
    let mut rows = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4] {
        let p = unit(eps)?;
        let v = truncated_diffusivity(2, &p, &q, &table_for(2, &p)?)?.value;
        let dev = (v - target).abs() / target;
        devs.push(dev);
        rows.push(json!({ "eps": eps, "value": v, "rel_dev": dev }));
    }
    let shrinking = devs.windows(2).all(|w| w[1] < w[0]);
    let pass = devs[2] <= 0.10 && shrinking;
    Ok((
        pass,
        json!({ "target": target, "rows": rows, "shrinking": shrinking }),
        "10% of 2 G_3(pi) at eps 1e-4; deviation strictly decreasing over 1e-2, 1e-3, 1e-4",
        format!(
            "deviation {:.4} / {:.4} / {:.4}, shrinking = {shrinking}",
            devs[0], devs[1], devs[2]
        ),
    ))
}

fn covariance(vc: &VerifyConfig) -> Result<Outcome> {
    let eps = 0.2;
    let m = make_mollifier(MollifierKind::CompactBump, eps)?;
    // L = 25.6 keeps the missing zero mode's share of the variance at 0.3%
    let grid = GridSpec::new(25.6, 1024, eps)?;
    let half = 12.8;
    let base = [[0.0, 0.0], [half, 0.0], [0.0, half], [half, half]];
    let n = scaled(10_000, vc);
    let e = empirical_covariance(n, grid, m, &[[0.0, 0.0]], &base, VERIFY_SEED)?.remove(0);
    let c = theoretical_covariance(&m, [0.0, 0.0])?;
    let within = |a: usize, b: usize| (e.mean[a][b] - c[a][b]).abs() <= 3.0 * e.sem[a][b];
    let entries = within(0, 0) && within(1, 1) && within(0, 1) && within(1, 0);
    let iso = e.isotropy.0.abs() <= 3.0 * e.isotropy.1;
    let div = e.divergence_max <= 1e-12;
    Ok((
        entries && iso && div,
        json!({
            "n_fields": n,
            "mean": e.mean,
            "sem": e.sem,
            "theory": c,
            "isotropy": [e.isotropy.0, e.isotropy.1],
            "divergence_max": e.divergence_max,
        }),
        "3 SEM per entry; divergence <= 1e-12; isotropy 3 SEM",
        format!(
            "C11 {:.4} +- {:.4}, C22 {:.4} +- {:.4} vs {:.4}; divergence {:e}",
            e.mean[0][0], e.sem[0][0], e.mean[1][1], e.sem[1][1], c[0][0], e.divergence_max
        ),
    ))
}

fn pure_diffusion(vc: &VerifyConfig) -> Result<Outcome> {
    let p = ModelParams::new(0.0, 1.0, 0.1, 1.0)?;
    let m = make_mollifier(MollifierKind::CompactBump, p.eps)?;
    let setup = derive_setup(&p, &m, 1.0, CouplingMode::WeakCoupling, 0.0, None)?;
    let sched = SimSchedule::new(1.0, setup.dt, &[1.0], CouplingMode::WeakCoupling, 0.0)?;
    let n = scaled(10_000, vc);
    let r = annealed_moments(&p, setup.grid, m, &sched, n, VERIFY_SEED)?;
    let x = *r.get(Statistic::XSq, 1.0).unwrap();
    let cross = *r.get(Statistic::XCross, 1.0).unwrap();
    let pass = x.within(2.0, 3.0) && cross.within(0.0, 3.0) && r.bookkeeping_max <= 1e-12;
    Ok((
        pass,
        json!({
            "n_replicas": n,
            "x_sq": [x.mean, x.sem],
            "x1_x2": [cross.mean, cross.sem],
            "bookkeeping_max": r.bookkeeping_max,
            "flagged_fraction": r.flagged_fraction,
        }),
        "E|X_1|^2 = 2 and E[X1 X2] = 0 within 3 SEM; X = N + nu B to 1e-12 relative",
        format!(
            "E|X_1|^2 = {:.4} +- {:.4}, E[X1 X2] = {:.4} +- {:.4}, bookkeeping {:e}",
            x.mean, x.sem, cross.mean, cross.sem, r.bookkeeping_max
        ),
    ))
}

/// Horizon of the weak-coupling criterion: the Laplace comparator needs
/// `lambda T >= 3`, so `T = 1` cannot be used at `lambda = 1`.
pub const WEAK_COUPLING_T: f64 = 4.0;

fn weak_coupling(vc: &VerifyConfig) -> Result<Outcome> {
    let p = unit(0.1)?;
    let checkpoints: Vec<f64> = (1..=80).map(|k| 0.05 * k as f64).collect();
    let n = scaled(2_000, vc);
    let rows = weak_coupling_sweep(&[0.4, 0.2, 0.1], &p, WEAK_COUPLING_T, &checkpoints, n, VERIFY_SEED)?;
    let mut pass = true;
    let mut measured = Vec::new();
    let mut parts = Vec::new();
    for r in &rows {
        let target = r.laplace_truncated[1];
        let ratio = r.laplace_mc.map(|v| v / target);
        let close = ratio.is_some_and(|x| (x - 1.0).abs() <= 0.25);
        let cross = r.cross.within(0.0, 3.0);
        pass &= close && cross && !r.unreliable;
        parts.push(format!("eps {}: mc/n2 = {:.3}", r.eps, ratio.unwrap_or(f64::NAN)));
        measured.push(json!({
            "eps": r.eps,
            "laplace_mc": r.laplace_mc,
            "laplace_truncated": r.laplace_truncated,
            "ratio_to_n2": ratio,
            "n_sq_rate": [r.n_sq_rate.mean, r.n_sq_rate.sem],
            "x1_x2": [r.cross.mean, r.cross.sem],
            "flagged_fraction": r.flagged_fraction,
            "unreliable": r.unreliable,
        }));
    }
    Ok((
        pass,
        json!({ "n_replicas": n, "t_final": WEAK_COUPLING_T, "rows": measured }),
        "Laplace MC within 25% of (4/lambda^2) truncated(n=2); E[X1 X2] within 3 SEM; no unreliable row",
        parts.join(", "),
    ))
}

fn superdiffusivity(vc: &VerifyConfig) -> Result<Outcome> {
    let times = geometric_times(10.0, 1000.0, 7);
    let n = scaled(500, vc);
    let r = superdiffusivity_scan(&ScanParams::default(), &times, n, VERIFY_SEED, None)?;
    let monotone = r.pairs.iter().all(|p| p.non_decreasing);
    let pass = monotone && r.fit.b_lower_95 > 0.0 && !r.unreliable;
    Ok((
        pass,
        json!({
            "n_replicas": n,
            "rows": r.rows.iter().map(|e| json!([e.time, e.mean, e.sem])).collect::<Vec<_>>(),
            "fit": r.fit,
            "pairs": r.pairs,
            "flagged_fraction": r.flagged_fraction,
        }),
        "each consecutive pair non-decreasing within 3 SEM; slope b > 0 at 95% (one-sided)",
        format!(
            "b = {:.4} +- {:.4}, monotone = {monotone}, flagged {:.4}",
            r.fit.b, r.fit.b_se, r.flagged_fraction
        ),
    ))
}

fn residual_stability() -> Result<Outcome> {
    let q = QuadratureSpec::default();
    let eps = [1e-1, 1e-2, 1e-3, 1e-4];
    let r: Vec<f64> = eps
        .iter()
        .map(|&e| replacement_residual(&unit(e)?, [0.0, 0.0], |_| 1.0, |_| 1.0, &q))
        .collect::<Result<_>>()?;
    let hi = r.iter().copied().fold(0.0, f64::max);
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        hi < 2.0 * lo && hi <= REPLACEMENT_RESIDUAL_BOUND,
        json!({ "eps": eps, "residual": r, "bound": REPLACEMENT_RESIDUAL_BOUND }),
        "max/min < 2 and max <= 10.3",
        format!("residuals {:.4} .. {:.4}", lo, hi),
    ))
}

/// A configuration small enough to run every command in a few seconds.
pub fn smoke_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.model = ModelParams {
        lambda_hat: 1.0,
        nu: 1.0,
        eps: 0.4,
        lambda: 1.0,
    };
    c.grid = Some(GridOverride {
        box_length: 8.0,
        grid_n: None,
    });
    c.schedule.t_final = 0.5;
    c.schedule.checkpoints = vec![0.25, 0.5];
    c.n_replicas = 16;
    c.master_seed = 11;
    c.analytic.n_max = 3;
    c.analytic.points = 17;
    c.sweep.eps_list = vec![0.4, 0.3];
    c.scan.t_list = vec![0.5, 1.0];
    c.scan.box_length = Some(12.0);
    c.resolvent.n_max = 2;
    c.resolvent.residual_x_sums = vec![[0.0, 0.0], [2.0, 1.0]];
    c.verify.only = vec![1];
    c
}

fn determinism() -> Result<Outcome> {
    let base = smoke_config();
    let mut mismatched = Vec::new();
    for cmd in Command::ALL {
        let a = tempfile::tempdir()?;
        let b = tempfile::tempdir()?;
        let mut ca = base.clone();
        ca.output_dir = a.path().to_path_buf();
        let mut cb = base.clone();
        cb.output_dir = b.path().to_path_buf();
        let oa = with_threads(1, || run(cmd, &ca))?;
        let ob = with_threads(3, || run(cmd, &cb))?;
        if oa.exit_code != ob.exit_code || !same_outputs(a.path(), b.path(), &oa.files)? {
            mismatched.push(cmd.name());
        }
    }
    Ok((
        mismatched.is_empty(),
        json!({ "commands": Command::ALL.map(|c| c.name()), "mismatched": mismatched }),
        "byte-identical files for 1 and 3 worker threads",
        if mismatched.is_empty() {
            "all 7 commands reproduce byte for byte".to_string()
        } else {
            format!("differences in {}", mismatched.join(", "))
        },
    ))
}
