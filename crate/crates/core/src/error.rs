use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("singular operator: coordinate {index} has zero gain and no stabilizer")]
    SingularOperator { index: usize },

    #[error("contract error: {0}")]
    Contract(String),

    #[error("domain error at node {node}: {op} of {value}")]
    Domain {
        node: usize,
        op: &'static str,
        value: f64,
    },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("non-finite loss at step {step} (batch seed {batch_seed})")]
    NonFiniteLoss { step: usize, batch_seed: u64 },

    #[error("adaptive schedule did not reach the floor within {levels} levels")]
    Termination {
        levels: usize,
        trajectory: Box<crate::sampling::Trajectory>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
