use std::fmt;

use thiserror::Error;

use crate::optimizer::LmTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Input,
    Normalize,
    SphereFit,
    InitialRotation,
    Morph,
    FinalRotation,
    EulerExtraction,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Input => "input",
            Stage::Normalize => "normalize",
            Stage::SphereFit => "sphere-fit",
            Stage::InitialRotation => "initial-rotation",
            Stage::Morph => "morph",
            Stage::FinalRotation => "final-rotation",
            Stage::EulerExtraction => "euler-extraction",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate decomposition: yaw {yaw_deg:.6} deg is at gimbal lock")]
    GimbalLock { yaw_deg: f64 },

    #[error("point behind camera (projective depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("numerical failure after {} iterations: {reason}", trace.records.len())]
    NumericalFailure { reason: String, trace: Box<LmTrace> },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Stage the error is attributed to, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// The error with any stage wrapper removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
