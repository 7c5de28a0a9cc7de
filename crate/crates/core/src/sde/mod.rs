//! Euler–Maruyama particle paths in sampled environments and the ensemble
//! statistics built from them.

mod ensemble;
mod path;
mod scan;
mod sweep;

pub use ensemble::{
    annealed_moments, annealed_moments_on, derive_setup, reduce, run_replica, AnnealedMoments,
    DerivedSetup, MomentRow, ReplicaSummary, Statistic,
};
pub use path::{drift_bound, simulate_path, stable_dt, CouplingMode, SimSchedule, Trajectory};
pub use scan::{
    fit_sqrt_log, geometric_times, superdiffusivity_scan, superdiffusivity_scan_on, LinearFit,
    PairCheck, ScanParams, ScanResult,
};
pub use sweep::{weak_coupling_sweep, weak_coupling_sweep_on, SweepRow, SWEEP_TRUNCATIONS};
