use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical failure in {op} after {iterations} iterations")]
    NumericalFailure { op: &'static str, iterations: usize },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no samples supplied for bound estimation")]
    EmptySamples,

    #[error("rollout diverged at step {step} (state norm {norm:e})")]
    UnstableRollout { step: usize, norm: f64 },

    #[error("rank condition failed: rank [U;Phi;X0] = {rank}, required {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("rank condition [U;Phi;X0] not met after {attempts} excitation attempts (failing subsystem indices: {failing:?})")]
    RankConditionNotMet {
        attempts: usize,
        failing: Vec<usize>,
    },

    #[error("record of {samples} samples is too short for the rank condition: subsystem index {subsystem} needs (m+l)(n+1)+n = {required}")]
    InsufficientSamples {
        samples: usize,
        required: usize,
        subsystem: usize,
    },

    #[error("admissible decision space is empty (T={samples}, n={states}, l={interconnections})")]
    EmptyFeasibleSpace {
        samples: usize,
        states: usize,
        interconnections: usize,
    },

    #[error("decision matrix violates equality constraints: {0}")]
    ConstraintViolation(String),

    #[error(
        "S = X0*Q is not safely positive definite (lambda_min {lambda_min:e} <= floor {floor:e})"
    )]
    SingularS { lambda_min: f64, floor: f64 },

    #[error("interconnection {from} -> {to} is not declared linear")]
    NonlinearInterconnection { from: usize, to: usize },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
