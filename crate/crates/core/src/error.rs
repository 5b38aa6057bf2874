use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} outside of [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },

    #[error("ODE solver failure: {0}")]
    SolverFailure(String),

    /// The leader Riccati system exceeded the blow-up threshold while being
    /// integrated backward; `time` is the first node where it happened.
    #[error("Riccati solution blew up at t = {time} (max |entry| = {magnitude:e})")]
    FiniteTimeBlowUp { time: f64, magnitude: f64 },

    #[error("policy produced a non-finite control {value} at node {node}")]
    PolicyEvaluation { node: usize, value: f64 },

    #[error("degenerate path: precision {precision:e} below floor {floor:e}")]
    DegeneratePath { precision: f64, floor: f64 },

    #[error("all {paths} paths in the ensemble are degenerate")]
    DegenerateEnsemble { paths: usize },

    #[error("optimizer initialization failed: {0}")]
    Initialization(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverFailure(_)
                | Error::FiniteTimeBlowUp { .. }
                | Error::PolicyEvaluation { .. }
                | Error::DegeneratePath { .. }
                | Error::DegenerateEnsemble { .. }
                | Error::Initialization(_)
        )
    }
}
