use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("transfer error: {0}")]
    Transfer(String),

    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("ingest error at row {row}, column `{column}`: {message}")]
    Ingest { row: usize, column: String, message: String },

    #[error("encode error: {0}")]
    Encode(String),

    #[error("test inapplicable: {0}")]
    TestInapplicable(String),

    #[error("impute error: {0}")]
    Impute(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("constant feature `{0}` cannot be min-max scaled")]
    ConstantFeature(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("undefined ROC AUC: {0}")]
    UndefinedAuc(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 covers bad configuration and unreadable inputs, 3 covers bad data,
    /// 4 a diverged training run.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema(_) | Error::Io { .. } | Error::Scenario(_) => 2,
            Error::Diverged { .. } => 4,
            _ => 3,
        }
    }
}
