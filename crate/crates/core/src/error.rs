use std::fmt;

use thiserror::Error;

/// Grid location of a bad value, in interior (ghost-free) indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub i: usize,
    pub j: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid state at {location}: {what}")]
    InvalidState { what: String, location: Location },

    #[error("tridiagonal solve broke down (zero pivot) on line {line}, row {row}")]
    TridiagonalBreakdown { line: usize, row: usize },

    #[error("singular block in preconditioner at line {line}, block {block}")]
    SingularBlock { line: usize, block: usize },

    #[error("linear solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    SolverDiverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("solution blew up in stage {stage}: {cause}")]
    BlowUp { stage: usize, cause: String },

    #[error("stability function has a pole: stage {stage} factor 1 - a_ii*w vanishes")]
    Pole { stage: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
