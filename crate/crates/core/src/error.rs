use thiserror::Error;

/// Errors produced by the simulator, encoders, reducers and trainers.
#[derive(Debug, Error)]
pub enum QcnnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("training failed at iteration {iteration}: {message}")]
    TrainingFailure { iteration: usize, message: String },

    #[error("cannot construct network: {0}")]
    Construction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = QcnnError> = std::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::QcnnError::InvalidArgument(format!($($arg)*))
    };
}
pub(crate) use invalid;
