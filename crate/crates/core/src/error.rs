use std::io;

use thiserror::Error;

/// Errors produced by kernel construction, the solvers and the harness.
#[derive(Debug, Error)]
pub enum MklError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix validation failed: {0}")]
    MatrixValidation(String),

    #[error("matrix could not be made positive semidefinite with ridge up to {max_ridge:e} (min eigenvalue {min_eigenvalue:e})")]
    Irreparable { max_ridge: f64, min_eigenvalue: f64 },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("all directions are zero; the weight update is undefined")]
    DegenerateDirection,

    #[error("problem of size {size} exceeds the limit of {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl MklError {
    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            MklError::Io(_) => 4,
            MklError::NonConvergence(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, MklError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(MklError::InvalidInput(msg.into()))
}
