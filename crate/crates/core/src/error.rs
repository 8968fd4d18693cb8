use std::path::PathBuf;

use crate::lp::LpStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("nuisance region is empty (M = 0)")]
    EmptyNuisance,

    #[error(
        "grid position {position_index} is {distance_mm:.4} mm from contact {contact} \
         (exclusion radius {radius_mm} mm)"
    )]
    Geometry {
        contact: String,
        position_index: usize,
        distance_mm: f64,
        radius_mm: f64,
    },

    #[error(
        "target position {position:?} is not a grid position; nearest is #{nearest_index} \
         at {nearest:?} ({distance_mm:.4} mm away)"
    )]
    TargetLookup {
        position: [f64; 3],
        nearest_index: usize,
        nearest: [f64; 3],
        distance_mm: f64,
    },

    #[error("invalid current pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("linear program {context}: status {status:?}")]
    Lp { status: LpStatus, context: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("every lattice point failed: {}", .0.join("; "))]
    AllCandidatesFailed(Vec<String>),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
