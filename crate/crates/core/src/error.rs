use thiserror::Error;

use crate::fit::FitSystem;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric range exceeded: {0}")]
    NumericRange(String),

    /// The assembled system is rank deficient; infinitely many surfaces fit.
    #[error("singular system: rank {} < dimension {}", .0.rank, .0.dim)]
    SingularSystem(Box<FitSystem>),

    /// Two points share planar coordinates but differ in height.
    #[error("vertical pair: points share (x, y) = ({x}, {y}) with different z")]
    VerticalPair { x: f64, y: f64 },

    #[error("perturbation schedule did not converge after {steps} steps (last length {last_length})")]
    NoConvergence { steps: usize, last_length: f64 },

    #[error("every perturbed system in the schedule was singular")]
    AllSingular,

    #[error("point ({x}, {y}, {z}) is off the surface by {residual}")]
    OffSurface { x: f64, y: f64, z: f64, residual: f64 },

    #[error("distance matrix is incomplete: pair ({0}, {1}) has no value")]
    IncompleteMatrix(usize, usize),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("input contains no points")]
    EmptyInput,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::NumericRange(_) => "numeric-range",
            Error::SingularSystem(_) => "singular",
            Error::VerticalPair { .. } => "vertical-pair",
            Error::NoConvergence { .. } => "no-convergence",
            Error::AllSingular => "all-singular",
            Error::OffSurface { .. } => "off-surface",
            Error::IncompleteMatrix(..) => "incomplete-matrix",
            Error::Parse { .. } => "parse",
            Error::EmptyInput => "empty-input",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
