//! Spectral synthesis of the mollified curl field on a periodic grid.

mod covariance;
mod mollifier;
mod snapshot;
mod spectral;

pub use covariance::{bessel_j, empirical_covariance, theoretical_covariance, CovarianceEstimate};
pub use mollifier::{make_mollifier, MollifierKind, MollifierSpec};
pub use snapshot::{read_snapshot, write_snapshot};
pub use spectral::{
    eval_field, sample_field, FieldSampler, GridSpec, LazyField, SpectralField, Spectrum,
    Synthetic, VectorField,
};
