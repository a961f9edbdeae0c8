use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("grid too coarse: h^2 = {h2:.3e} exceeds stability limit {limit:.3e}")]
    GridTooCoarse { h2: f64, limit: f64 },

    #[error("no double well: found {minima} local minimum/minima")]
    NoDoubleWell { minima: usize },

    #[error("parity transfer undefined at exact degeneracy (epsilon = 0 and cos(phi/2) = 0)")]
    DegeneratePoint,

    #[error("eigensolver did not converge: residual {residual:.3e} > {tolerance:.3e}")]
    Convergence { residual: f64, tolerance: f64 },

    #[error("propagation step rejected at t = {time:.6} ns: norm drift {drift:.3e}")]
    StepRejected { time: f64, drift: f64 },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status: 1 for configuration and I/O problems, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Io(_) | Error::Csv(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
