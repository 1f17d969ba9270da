use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("inconsistent slot geometry: {0}")]
    Geometry(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("power iteration did not converge after {iterations} iterations (last change {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("schedule contract violated: {0}")]
    Contract(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("{context}: {source}")]
    Cell {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
