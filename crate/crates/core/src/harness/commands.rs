use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Derived, RunConfig};
use super::output::{fmt_f64, fmt_opt, write_csv, write_json, Meta};
use super::verify::{identity_checks, run_criteria, IdentityCheck};
use crate::analytic::{
    default_x_max, effective_diffusivity, g_closed, g_table, laplace_limit, s_closed, s_n_grid,
    truncated_limit, EffectiveDiffusivity, DEFAULT_GRID_SIZE,
};
use crate::error::Result;
use crate::field::{sample_field, write_snapshot, FieldSampler};
use crate::resolvent::{
    base_diffusivity, mc_laplace_comparator, replacement_sides, table_for, truncated_diffusivity,
    Substitution,
};
use crate::rng::{derive_seed, Purpose};
use crate::sde::{annealed_moments, superdiffusivity_scan, weak_coupling_sweep, CouplingMode, Statistic};

/// Exit code for runs whose estimates are flagged unreliable.
pub const EXIT_UNRELIABLE: i32 = 3;
/// Exit code for failed checks (identity suite, verification criteria).
pub const EXIT_FAILED: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Analytic,
    SampleField,
    Simulate,
    Sweep,
    Superdiffusivity,
    Resolvent,
    Verify,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Analytic,
        Command::SampleField,
        Command::Simulate,
        Command::Sweep,
        Command::Superdiffusivity,
        Command::Resolvent,
        Command::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Analytic => "analytic",
            Command::SampleField => "sample-field",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Superdiffusivity => "superdiffusivity",
            Command::Resolvent => "resolvent",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub exit_code: i32,
    /// Human-readable lines for the terminal.
    pub report: Vec<String>,
}

#[derive(Serialize)]
struct Echo<'a> {
    config: &'a RunConfig,
    derived: &'a Derived,
}

/// Validate, create the output directory and echo the resolved config.
fn prepare(cfg: &RunConfig) -> Result<(Derived, Meta, PathBuf)> {
    let derived = cfg.validate()?;
    let meta = Meta::new(cfg.hash(), cfg.master_seed);
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("config.json");
    write_json(&path, &meta, &Echo {
        config: cfg,
        derived: &derived,
    })?;
    Ok((derived, meta, path))
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome> {
    match cmd {
        Command::Analytic => cmd_analytic(cfg),
        Command::SampleField => cmd_sample_field(cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::Sweep => cmd_sweep(cfg),
        Command::Superdiffusivity => cmd_superdiffusivity(cfg),
        Command::Resolvent => cmd_resolvent(cfg),
        Command::Verify => cmd_verify(cfg),
    }
}

/// Lines printed by `--dry-run`.
pub fn dry_run(cfg: &RunConfig) -> Result<Vec<String>> {
    let d = cfg.validate()?;
    Ok(vec![
        format!("config_hash {}", cfg.hash()),
        format!("L {}", fmt_f64(d.setup.grid.box_length)),
        format!("N {}", d.setup.grid.grid_n),
        format!("h {}", fmt_f64(d.setup.grid.spacing())),
        format!("dt {}", fmt_f64(d.schedule.dt)),
        format!("steps {}", d.schedule.n_steps()),
        format!("coupling {}", fmt_f64(d.setup.coupling)),
    ])
}

#[derive(Serialize)]
struct Constants {
    #[serde(flatten)]
    diffusivity: EffectiveDiffusivity,
    laplace_limit: f64,
    truncated_limits: Vec<TruncatedLimit>,
    identities: Vec<IdentityCheck>,
}

#[derive(Serialize)]
struct TruncatedLimit {
    n: usize,
    value: f64,
}

pub fn cmd_analytic(cfg: &RunConfig) -> Result<Outcome> {
    let (_, meta, echo) = prepare(cfg)?;
    let p = cfg.model;
    let ids = identity_checks(&p, false);
    let failed: Vec<String> = ids
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("identity {} failed: lhs {} rhs {} rel {:e}", c.name, c.lhs, c.rhs, c.rel_err))
        .collect();
    if !failed.is_empty() {
        return Ok(Outcome {
            files: vec![echo],
            exit_code: EXIT_FAILED,
            report: failed,
        });
    }
    let a = &cfg.analytic;
    let n = a.n_max;
    let x_max = a.x_max.unwrap_or_else(|| default_x_max(&p));
    let stride = (DEFAULT_GRID_SIZE - 1).div_ceil(a.points - 1);
    let fine = (a.points - 1) * stride + 1;
    let table = g_table(n, x_max, fine, &p)?;
    let (grid, s) = s_n_grid(n, x_max, fine, &p)?;
    let mut header: Vec<String> = vec!["x".into()];
    header.extend((1..=n).map(|j| format!("G_{j}")));
    header.extend(["G_closed".into(), format!("S_{n}"), "S_closed".into()]);
    let rows: Vec<Vec<String>> = (0..a.points)
        .map(|k| {
            let i = k * stride;
            let x = grid[i];
            let mut r = vec![fmt_f64(x)];
            r.extend((1..=n).map(|j| fmt_f64(table.values[j][i])));
            r.push(fmt_f64(g_closed(x, &p)));
            r.push(fmt_f64(s[i]));
            r.push(fmt_f64(s_closed(x, &p)));
            r
        })
        .collect();
    let csv_path = cfg.output_dir.join("analytic.csv");
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&csv_path, &meta, &h, &rows)?;
    let constants = Constants {
        diffusivity: effective_diffusivity(&p),
        laplace_limit: laplace_limit(&p),
        truncated_limits: (1..=n)
            .map(|k| Ok(TruncatedLimit { n: k, value: truncated_limit(k, &p)? }))
            .collect::<Result<_>>()?,
        identities: ids,
    };
    let json_path = cfg.output_dir.join("constants.json");
    write_json(&json_path, &meta, &constants)?;
    Ok(Outcome {
        files: vec![echo, csv_path, json_path],
        exit_code: 0,
        report: vec![format!(
            "c = {}  c^2 = {}",
            fmt_f64(constants.diffusivity.c),
            fmt_f64(constants.diffusivity.c_sq)
        )],
    })
}

#[derive(Serialize)]
struct FieldInfo {
    grid: crate::field::GridSpec,
    eps: f64,
    mollifier: crate::field::MollifierKind,
    support_warning: bool,
    seed: u64,
    component_rms: [f64; 2],
    max_speed: f64,
    fourier_divergence_max: f64,
    lattice_component_variance: f64,
    continuum_component_variance: f64,
}

pub fn cmd_sample_field(cfg: &RunConfig) -> Result<Outcome> {
    let (d, meta, echo) = prepare(cfg)?;
    let m = cfg.mollifier_spec()?;
    // the environment replica 0 of `simulate` sees
    let seed = derive_seed(cfg.master_seed, 0, Purpose::Field);
    let f = sample_field(d.setup.grid, m, seed)?;
    let snap = cfg.output_dir.join("field.snap");
    write_snapshot(&f, BufWriter::new(File::create(&snap)?))?;
    let n = f.values.len() as f64;
    let ms = |c: usize| {
        let sq: Vec<f64> = f.values.iter().map(|v| v[c] * v[c]).collect();
        (crate::stats::pairwise_sum(&sq) / n).sqrt()
    };
    let info = FieldInfo {
        grid: f.spec,
        eps: m.eps,
        mollifier: m.kind,
        support_warning: m.support_warning,
        seed,
        component_rms: [ms(0), ms(1)],
        max_speed: f.max_speed(),
        fourier_divergence_max: f.fourier_divergence_max,
        lattice_component_variance: FieldSampler::new(f.spec, m)?.lattice_component_variance(),
        continuum_component_variance: m.point_variance()?,
    };
    let info_path = cfg.output_dir.join("field.json");
    write_json(&info_path, &meta, &info)?;
    Ok(Outcome {
        files: vec![echo, snap, info_path],
        exit_code: 0,
        report: vec![format!(
            "N = {}, rms = ({}, {}), divergence ratio {:e}",
            f.spec.grid_n, info.component_rms[0], info.component_rms[1], info.fourier_divergence_max
        )],
    })
}

#[derive(Serialize)]
struct SimulateSummary {
    n_replicas: usize,
    flagged_fraction: f64,
    unreliable: bool,
    bookkeeping_max: f64,
    max_excursion: f64,
    /// Zero-drift runs only: `E|X_t|^2 = 2 nu^2 t` within 3 SEM at each checkpoint.
    pure_diffusion_checks: Vec<PureDiffusionCheck>,
}

#[derive(Serialize)]
struct PureDiffusionCheck {
    t: f64,
    mean: f64,
    sem: f64,
    target: f64,
    pass: bool,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let (d, meta, echo) = prepare(cfg)?;
    let p = cfg.model;
    let m = cfg.mollifier_spec()?;
    let mom = annealed_moments(&p, d.setup.grid, m, &d.schedule, cfg.n_replicas, cfg.master_seed)?;
    let eps_s = fmt_f64(p.eps);
    let seed_s = cfg.master_seed.to_string();
    let rows: Vec<Vec<String>> = mom
        .rows
        .iter()
        .map(|r| {
            vec![
                eps_s.clone(),
                fmt_f64(r.estimate.time),
                r.stat.name().to_string(),
                fmt_f64(r.estimate.mean),
                fmt_f64(r.estimate.sem),
                r.estimate.n_replicas.to_string(),
                fmt_f64(mom.flagged_fraction),
                seed_s.clone(),
            ]
        })
        .collect();
    let moments = cfg.output_dir.join("moments.csv");
    write_csv(
        &moments,
        &meta,
        &["eps", "t", "stat", "mean", "sem", "n_samples", "flagged_fraction", "seed"],
        &rows,
    )?;

    let series = mom.series(Statistic::NSq);
    let times: Vec<f64> = series.iter().map(|e| e.time).collect();
    let vals: Vec<f64> = series.iter().map(|e| e.mean).collect();
    let lam2 = p.lambda * p.lambda;
    let mut comp: Vec<Vec<String>> = Vec::new();
    let row = |q: &str, n: Option<usize>, v: Option<f64>, err: Option<f64>| {
        vec![
            eps_s.clone(),
            fmt_f64(p.lambda),
            q.to_string(),
            n.map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt(v),
            fmt_opt(err),
        ]
    };
    comp.push(row("laplace_mc", None, mc_laplace_comparator(&times, &vals, &p).ok(), None));
    if cfg.schedule.mode == CouplingMode::WeakCoupling {
        let table = table_for(cfg.resolvent.n_max, &p)?;
        for n in 1..=cfg.resolvent.n_max {
            let v = truncated_diffusivity(n, &p, &cfg.quadrature, &table)?;
            comp.push(row("truncated_diffusivity", Some(n), Some(v.value), Some(v.est_error)));
            comp.push(row("laplace_truncated", Some(n), Some(4.0 / lam2 * v.value), Some(4.0 / lam2 * v.est_error)));
        }
        comp.push(row("laplace_limit", None, Some(laplace_limit(&p)), None));
    }
    let comparators = cfg.output_dir.join("comparators.csv");
    write_csv(&comparators, &meta, &["eps", "lambda", "quantity", "n", "value", "est_error"], &comp)?;

    let zero_drift = d.setup.coupling == 0.0;
    let checks: Vec<PureDiffusionCheck> = if zero_drift {
        mom.series(Statistic::XSq)
            .iter()
            .map(|e| {
                let target = 2.0 * p.nu * p.nu * e.time;
                PureDiffusionCheck {
                    t: e.time,
                    mean: e.mean,
                    sem: e.sem,
                    target,
                    pass: e.within(target, 3.0),
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut report = vec![format!(
        "{} replicas, flagged fraction {}, dt {}",
        mom.n_replicas,
        fmt_f64(mom.flagged_fraction),
        fmt_f64(mom.dt)
    )];
    for c in &checks {
        report.push(format!(
            "{} pure diffusion at t = {}: {} +- {} vs {}",
            if c.pass { "PASS" } else { "FAIL" },
            fmt_f64(c.t),
            fmt_f64(c.mean),
            fmt_f64(c.sem),
            fmt_f64(c.target)
        ));
    }
    let summary = SimulateSummary {
        n_replicas: mom.n_replicas,
        flagged_fraction: mom.flagged_fraction,
        unreliable: mom.unreliable,
        bookkeeping_max: mom.bookkeeping_max,
        max_excursion: mom.max_excursion,
        pure_diffusion_checks: checks,
    };
    let summary_path = cfg.output_dir.join("summary.json");
    write_json(&summary_path, &meta, &summary)?;
    let exit_code = if summary.unreliable {
        EXIT_UNRELIABLE
    } else if summary.pure_diffusion_checks.iter().any(|c| !c.pass) {
        EXIT_FAILED
    } else {
        0
    };
    Ok(Outcome {
        files: vec![echo, moments, comparators, summary_path],
        exit_code,
        report,
    })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let (_, meta, echo) = prepare(cfg)?;
    let s = &cfg.schedule;
    let rows = weak_coupling_sweep(
        &cfg.sweep.eps_list,
        &cfg.model,
        s.t_final,
        &s.checkpoints,
        cfg.n_replicas,
        cfg.master_seed,
    )?;
    let mut header = vec![
        "eps", "t_final", "L", "N", "dt", "n_sq_rate", "n_sq_rate_sem", "x_sq_rate", "x_sq_rate_sem",
        "x1_x2", "x1_x2_sem", "laplace_mc",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    header.extend(crate::sde::SWEEP_TRUNCATIONS.iter().map(|n| format!("laplace_truncated_{n}")));
    header.extend(["c_sq", "flagged_fraction", "unreliable"].map(String::from));
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                fmt_f64(r.eps),
                fmt_f64(r.t_final),
                fmt_f64(r.setup.grid.box_length),
                r.setup.grid.grid_n.to_string(),
                fmt_f64(r.setup.dt),
                fmt_f64(r.n_sq_rate.mean),
                fmt_f64(r.n_sq_rate.sem),
                fmt_f64(r.x_sq_rate.mean),
                fmt_f64(r.x_sq_rate.sem),
                fmt_f64(r.cross.mean),
                fmt_f64(r.cross.sem),
                fmt_opt(r.laplace_mc),
            ];
            v.extend(r.laplace_truncated.iter().map(|&x| fmt_f64(x)));
            v.extend([fmt_f64(r.c_sq), fmt_f64(r.flagged_fraction), r.unreliable.to_string()]);
            v
        })
        .collect();
    let path = cfg.output_dir.join("sweep.csv");
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&path, &meta, &h, &table)?;
    let report = rows
        .iter()
        .map(|r| {
            format!(
                "eps {}: E|N_T|^2/T = {} +- {}, laplace mc {} vs n=2 comparator {}",
                fmt_f64(r.eps),
                fmt_f64(r.n_sq_rate.mean),
                fmt_f64(r.n_sq_rate.sem),
                fmt_opt(r.laplace_mc),
                fmt_f64(r.laplace_truncated[1])
            )
        })
        .collect();
    Ok(Outcome {
        files: vec![echo, path],
        exit_code: if rows.iter().any(|r| r.unreliable) { EXIT_UNRELIABLE } else { 0 },
        report,
    })
}

pub fn cmd_superdiffusivity(cfg: &RunConfig) -> Result<Outcome> {
    let (_, meta, echo) = prepare(cfg)?;
    let sc = &cfg.scan;
    let r = superdiffusivity_scan(&sc.params, &sc.t_list, cfg.n_replicas, cfg.master_seed, sc.box_length)?;
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|e| vec![fmt_f64(e.time), fmt_f64(e.mean), fmt_f64(e.sem), e.n_replicas.to_string()])
        .collect();
    let csv_path = cfg.output_dir.join("scan.csv");
    write_csv(&csv_path, &meta, &["t", "y_sq_over_t", "sem", "n_samples"], &rows)?;
    let json_path = cfg.output_dir.join("scan.json");
    write_json(&json_path, &meta, &r)?;
    Ok(Outcome {
        files: vec![echo, csv_path, json_path],
        exit_code: if r.unreliable { EXIT_UNRELIABLE } else { 0 },
        report: vec![format!(
            "b = {} +- {} (95% lower bound {})",
            fmt_f64(r.fit.b),
            fmt_f64(r.fit.b_se),
            fmt_f64(r.fit.b_lower_95)
        )],
    })
}

pub fn cmd_resolvent(cfg: &RunConfig) -> Result<Outcome> {
    let (_, meta, echo) = prepare(cfg)?;
    let p = cfg.model;
    let table = table_for(cfg.resolvent.n_max, &p)?;
    let mut rows = Vec::new();
    for route in [Substitution::Direct, Substitution::RhoSubstitution] {
        let q = cfg.quadrature.with_substitution(route);
        let name = match route {
            Substitution::Direct => "direct",
            Substitution::RhoSubstitution => "rho_substitution",
        };
        let b = base_diffusivity(&p, &q)?;
        rows.push(vec![
            "base".into(),
            name.into(),
            "0".into(),
            fmt_f64(b.value),
            fmt_f64(b.est_error),
            fmt_f64(truncated_limit(1, &p)?),
        ]);
        for n in 1..=cfg.resolvent.n_max {
            let t = truncated_diffusivity(n, &p, &q, &table)?;
            rows.push(vec![
                "truncated".into(),
                name.into(),
                n.to_string(),
                fmt_f64(t.value),
                fmt_f64(t.est_error),
                fmt_f64(truncated_limit(n, &p)?),
            ]);
        }
    }
    let path = cfg.output_dir.join("resolvent.csv");
    write_csv(&path, &meta, &["quantity", "route", "n", "value", "est_error", "eps_limit"], &rows)?;
    let res_rows: Vec<Vec<String>> = cfg
        .resolvent
        .residual_x_sums
        .iter()
        .map(|&xs| {
            let s = replacement_sides(&p, xs, |_| 1.0, |_| 1.0, &cfg.quadrature)?;
            Ok(vec![
                fmt_f64(xs[0]),
                fmt_f64(xs[1]),
                fmt_f64(s.two_d),
                fmt_f64(s.one_d),
                fmt_f64(s.residual()),
            ])
        })
        .collect::<Result<_>>()?;
    let res_path = cfg.output_dir.join("replacement.csv");
    write_csv(&res_path, &meta, &["x_sum_1", "x_sum_2", "two_d", "one_d", "residual"], &res_rows)?;
    Ok(Outcome {
        files: vec![echo, path, res_path],
        exit_code: 0,
        report: vec![format!("{} resolvent rows, {} residual rows", rows.len(), res_rows.len())],
    })
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let (_, meta, echo) = prepare(cfg)?;
    let report = run_criteria(&cfg.verify)?;
    let path = cfg.output_dir.join("verify.json");
    write_json(&path, &meta, &report)?;
    Ok(Outcome {
        files: vec![echo, path],
        exit_code: if report.all_pass { 0 } else { EXIT_FAILED },
        report: report.criteria.iter().map(|c| c.line()).collect(),
    })
}

/// Byte comparison of two output directories, for the determinism check.
pub fn same_outputs(a: &Path, b: &Path, files: &[PathBuf]) -> Result<bool> {
    for f in files {
        let name = f.file_name().unwrap();
        if std::fs::read(a.join(name))? != std::fs::read(b.join(name))? {
            return Ok(false);
        }
    }
    Ok(true)
}
