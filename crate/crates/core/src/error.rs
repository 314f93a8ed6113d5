use thiserror::Error;

use crate::gl::SolveReport;

/// Errors produced by the engines, the trainer and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error("vertex {vertex} out of range for n = {n}")]
    InvalidVertex { vertex: usize, n: usize },
    #[error("self-loop ({0}, {0}) in input edge list")]
    SelfLoopInput(usize),
    #[error("vertex {0} has degree zero; random-walk normalization undefined")]
    ZeroDegree(usize),
    #[error("invalid part count {parts} for n = {n}")]
    InvalidPartCount { parts: usize, n: usize },
    #[error("empty target set")]
    EmptyTargets,
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("missing neighborhood context for {0}")]
    MissingContext(&'static str),
    #[error("model {0} has no local formulation")]
    NoLocalFormulation(&'static str),
    #[error("model {0} has no global formulation")]
    NoGlobalFormulation(&'static str),
    #[error("operator is not symmetric")]
    NotSymmetric,
    #[error("solve failed: residual {:.3e} > tol {:.3e} after {} iterations", .0.residual, .0.tolerance, .0.iterations)]
    SolveFailed(SolveReport),
    #[error("empty labeled set")]
    EmptyLabels,
    #[error("no forward cache")]
    NoCache,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid staleness configuration: {0}")]
    InvalidStaleness(String),
    #[error("simulation deadlock: {0}")]
    Deadlock(String),
    #[error("too few points for fit: {0}")]
    TooFewPoints(usize),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for GnnError {
    fn from(e: std::io::Error) -> Self {
        GnnError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GnnError>;

pub(crate) fn shape_err(msg: impl Into<String>) -> GnnError {
    GnnError::ShapeError(msg.into())
}
