//! Finite-sample confidence regions for the parameters of a linear model,
//! built by letting split conformal prediction intervals vote.
//!
//! The pipeline is:
//!
//! 1. [`conformal`] calibrates a least-squares predictor and emits intervals
//!    `Γ(X) = [A(X), B(X)]` for unlabelled inputs.
//! 2. [`bounds`] picks the vote threshold `k` so that the region
//!    `Θ_k = {θ : #{i : A_i ≤ θᵀX_i ≤ B_i} ≥ k}` contains the true parameter
//!    with probability at least `1 − β`.
//! 3. [`region`] encodes `Θ_k` as a big-M mixed-integer program, solved by
//!    the self-contained branch-and-bound in [`milp`], to test emptiness,
//!    bound coordinates and optimize linear objectives.
//!
//! [`synthetic`], [`abstain`] and [`harness`] provide the benchmark data,
//! regression with abstention, and the seeded Monte Carlo experiments.

pub mod abstain;
pub mod bounds;
pub mod conformal;
pub mod harness;
pub mod milp;
pub mod region;
pub mod special;
pub mod synthetic;

use thiserror::Error;

pub use special::SpecialError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Special(#[from] SpecialError),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("design matrix is rank deficient: {deficient} of {columns} columns are dependent")]
    SingularDesign { columns: usize, deficient: usize },

    #[error("calibration set of {n_cal} points is too small for alpha = {alpha}; need at least {min_n_cal}")]
    InfeasibleQuantile {
        n_cal: usize,
        alpha: f64,
        min_n_cal: usize,
    },

    #[error("vacuous guarantee: noise-free miscoverage {alpha_prime} >= 1")]
    VacuousGuarantee { alpha_prime: f64 },

    #[error("no valid vote threshold: {0}")]
    NoValidK(String),

    #[error("solver stopped before proving optimality ({nodes} nodes explored)")]
    Indeterminate { nodes: usize },

    #[error("big-M audit failed: solver point has {votes} votes, needs {k}")]
    BigMAudit { votes: usize, k: usize },

    #[error("experiment failed: {0}")]
    ExperimentFailed(String),

    #[error("LP text parse error at line {line}: {msg}")]
    LpParse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
