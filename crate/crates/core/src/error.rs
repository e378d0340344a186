use thiserror::Error;

use crate::parser::SourceSpan;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("variable-count mismatch: expected {expected}, got {got}")]
    VariableCount { expected: usize, got: usize },

    #[error("parse error at {span}: {message}")]
    Parse { message: String, span: SourceSpan },

    #[error("expression contains an inverse and is not a polynomial")]
    RationalNotPolynomial,

    #[error("expression is singular at the origin")]
    SingularAtOrigin,

    #[error("realization is not minimal")]
    NotMinimal,

    #[error("numerical rank decision ambiguous: relative value {value:e} near tolerance {tol:e}")]
    NumericalRankAmbiguity { value: f64, tol: f64 },

    #[error("SDP solver hit the iteration limit ({0} iterations)")]
    IterationLimit(usize),

    #[error("SDP solver numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("SDP problem too large: {size} real parameters exceeds cap {cap}")]
    ProblemTooLarge { size: usize, cap: usize },

    #[error("SDP status marginal at recursion level {level}")]
    MarginalSdp { level: usize },

    #[error("K_f is not convex")]
    NotConvex,

    #[error("polynomial is not an atom")]
    NotAtom,

    #[error("structure mismatch: {0}")]
    StructureMismatch(String),

    #[error("missing override for zero entry {index} of u (variable {var})")]
    MissingOverride { index: usize, var: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
