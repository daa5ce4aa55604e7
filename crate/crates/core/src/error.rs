use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("matrix not positive definite (vertex {vertex:?}, min eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { vertex: Option<usize>, eigenvalue: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("linear solver `{solver}` failed after {iterations} iterations (residual {residual:e})")]
    LinearSolve { solver: &'static str, iterations: usize, residual: f64 },

    #[error("nonlinear iteration did not converge in {iterations} steps at t = {time}; increments {history:?}")]
    NonlinearDivergence { iterations: usize, time: f64, history: Vec<f64> },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { key: key.into(), msg: msg.into() }
    }
}
