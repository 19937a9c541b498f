use thiserror::Error;

use crate::lanes::Slot;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polyline: {0}")]
    InvalidPolyline(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid oriented box: {0}")]
    InvalidBox(String),
    #[error("lane map is empty")]
    EmptyMap,
    #[error("no relevant lane candidates")]
    NoCandidates,
    #[error("trajectory too short: window needs {needed} points, got {got}")]
    TrajectoryTooShort { needed: usize, got: usize },
    #[error("label slot {0:?} was absent when the label was built")]
    LabelAbsent(Slot),
    #[error("length mismatch: expected {expected} points, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("timestep mismatch: {expected} s vs {got} s")]
    TimestepMismatch { expected: f64, got: f64 },
    #[error("horizon mismatch for {what}: expected {expected} steps, got {got}")]
    HorizonMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("degenerate ego/agent distance at step {t} for agent {agent_id}")]
    DegenerateDistance { t: usize, agent_id: String },
    #[error("no loss component supplied")]
    NoLossComponents,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("numerical check failed: {0}")]
    CheckFailed(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("parse error at `{path}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Input-side failures (bad files, violated invariants) as opposed to
    /// failures while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Parse { .. }
                | Error::InvalidPolyline(_)
                | Error::InvalidTrajectory(_)
                | Error::InvalidBox(_)
                | Error::InvalidConfig(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
