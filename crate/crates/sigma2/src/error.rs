//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by grid construction, solvers, and file handling.
#[derive(Debug, Error)]
pub enum Sigma2Error {
    /// A spanning-set orthogonalization did not produce the expected number of
    /// independent functions for some degree. This indicates a broken grid or
    /// truncation order, not a user error.
    #[error("basis rank mismatch at degree {degree}: expected {expected}, got {got}")]
    RankMismatch {
        degree: usize,
        expected: usize,
        got: usize,
    },

    /// The conformal factor left the elliptic cone (`sigma_1 > 0` and
    /// `sigma_2 > 0` must hold at every node).
    #[error("conformal metric left the admissible cone at node {node}: sigma1={sigma1:.6e}, sigma2={sigma2:.6e}")]
    NotAdmissible {
        node: usize,
        sigma1: f64,
        sigma2: f64,
    },

    /// An inner linear solve stalled or diverged.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// Newton iteration failed to reach the requested residual.
    #[error("Newton iteration failed at s={s}: {detail}")]
    NewtonStall { s: f64, detail: String },

    /// Deformation continuation could not step past an obstruction.
    #[error("continuation stalled at s={s} (step {step:.3e} below floor): {detail}")]
    ContinuationStall { s: f64, step: f64, detail: String },

    /// Degree computation could not certify a stable value.
    #[error("degree computation unstable: {0}")]
    DegreeUnstable(String),

    /// A Mobius normalization or continuation pushed the dilation parameter
    /// past the configured cap; the conformal factor is concentrating.
    #[error("dilation parameter t={t:.3e} exceeds cap {cap:.1e}: near-blow-up regime")]
    NearBlowup { t: f64, cap: f64 },

    /// Bad user-supplied parameter (truncation order, Mobius scale, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Sigma2Error {
    /// Stable machine-readable code for reports and exit diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Sigma2Error::RankMismatch { .. } => "rank_mismatch",
            Sigma2Error::NotAdmissible { .. } => "not_admissible",
            Sigma2Error::LinearSolve(_) => "linear_solve",
            Sigma2Error::NewtonStall { .. } => "newton_stall",
            Sigma2Error::ContinuationStall { .. } => "continuation_stall",
            Sigma2Error::DegreeUnstable(_) => "degree_unstable",
            Sigma2Error::NearBlowup { .. } => "near_blowup",
            Sigma2Error::InvalidArgument(_) => "invalid_argument",
            Sigma2Error::Config(_) => "config",
            Sigma2Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Sigma2Error>;
