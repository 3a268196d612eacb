use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for absent inputs, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingData(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<qcnn::QcnnError> for CliError {
    fn from(e: qcnn::QcnnError) -> Self {
        CliError::Other(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

macro_rules! config_err {
    ($($arg:tt)*) => {
        $crate::error::CliError::Config(format!($($arg)*))
    };
}
pub(crate) use config_err;
