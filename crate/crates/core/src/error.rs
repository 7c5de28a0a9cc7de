use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("argument {x} outside the domain of {what}")]
    Domain { what: &'static str, x: f64 },

    #[error("index error: {0}")]
    Index(String),

    #[error("table covers [0, {x_max}] but {x} was requested")]
    TableRange { x: f64, x_max: f64 },

    #[error("grid too coarse: spacing {h} exceeds eps/8 = {limit}")]
    GridTooCoarse { h: f64, limit: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("tolerance {target:e} not met before the grid cap (best {achieved:e})")]
    GridCap { target: f64, achieved: f64 },

    #[error("Laplace comparator rejected: lambda * T_final = {0} < 3, tail would dominate")]
    TailDominates(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}
