use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use curlgff::exec::with_threads;
use curlgff::harness::{dry_run, run, Command, RunConfig};

/// Weak-coupling diffusion in the curl of a mollified Gaussian free field.
#[derive(Parser, Debug)]
#[command(name = "curlgff", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Validate the config and print the derived box, grid and step.
    #[arg(long, global = true)]
    dry_run: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(cli: &Cli) -> curlgff::Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if cli.dry_run {
        for line in dry_run(&cfg)? {
            println!("{line}");
        }
        return Ok(0);
    }
    let outcome = with_threads(cli.threads, || run(cli.command, &cfg))?;
    for line in &outcome.report {
        println!("{line}");
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(outcome.exit_code)
}
