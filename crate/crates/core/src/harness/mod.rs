//! Configuration, command dispatch, output files and the verification suite.

mod commands;
mod config;
mod output;
pub mod verify;

pub use commands::{
    cmd_analytic, cmd_resolvent, cmd_sample_field, cmd_simulate, cmd_superdiffusivity, cmd_sweep,
    cmd_verify, dry_run, run, same_outputs, Command, Outcome, EXIT_FAILED, EXIT_UNRELIABLE,
};
pub use config::{
    AnalyticConfig, Derived, GridOverride, ResolventConfig, RunConfig, ScanConfig, ScheduleConfig,
    SweepConfig, VerifyConfig,
};
pub use output::{fmt_f64, fmt_opt, write_csv, write_json, Meta};
