use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the homogenization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("critical exponent: r = d = {d} is the critical case; no rate is established there")]
    CriticalExponent { d: usize },

    #[error("ellipticity violated at {point:?}: a = {value} outside [1/mu, mu] with mu = {mu}")]
    ValidationFailed { point: Vec<f64>, value: f64, mu: f64 },

    #[error("no node of the grid falls inside the requested subdomain")]
    EmptySubdomain,

    #[error("point coordinate {coordinate} on axis {axis} lies outside the grid box")]
    OutOfDomain { axis: usize, coordinate: f64 },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("field file format error in `{field}`: {message}")]
    Format { field: String, message: String },

    #[error("solver did not converge: {iterations} iterations, relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("defect center {center:?} is not inside the middle half of the truncation box of radius {radius}")]
    DefectNotCentered { center: Vec<f64>, radius: f64 },

    #[error("resolution too coarse: spacing {h} exceeds eps/{nodes_per_period} = {limit}")]
    ResolutionTooCoarse { h: f64, limit: f64, nodes_per_period: usize },

    #[error("truncation radius {radius} does not cover the rescaled domain (needs {required})")]
    TruncationTooSmall { radius: f64, required: f64 },

    #[error("need at least 4 radii spanning a factor 8, got {0:?}")]
    InsufficientRadii(Vec<f64>),

    #[error("oscillation is identically zero; growth exponent undefined")]
    DegenerateOscillation,

    #[error("slope fit needs at least 4 points, got {0}")]
    InsufficientPoints(usize),

    #[error("slope fit got non-positive value {value} at eps = {eps}")]
    NonPositiveValue { eps: f64, value: f64 },

    #[error("estimated memory {estimate_bytes} bytes exceeds the {limit_bytes}-byte budget; rerun with --allow-large")]
    TooLarge { estimate_bytes: u64, limit_bytes: u64 },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(field: &str, msg: impl Into<String>) -> Self {
        Error::Format {
            field: field.to_string(),
            message: msg.into(),
        }
    }

    /// True for errors caused by the input rather than by numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::CriticalExponent { .. }
                | Error::ValidationFailed { .. }
                | Error::Format { .. }
                | Error::DefectNotCentered { .. }
                | Error::ResolutionTooCoarse { .. }
                | Error::TruncationTooSmall { .. }
                | Error::InsufficientRadii(_)
                | Error::TooLarge { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
