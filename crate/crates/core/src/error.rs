use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column {0} has zero variance")]
    ConstantColumn(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no eigenvalue exceeds the zero threshold {threshold:e}")]
    RankZero { threshold: f64 },

    #[error("ridge parameter must be nonnegative, got {0}")]
    NegativeK(f64),

    #[error("ridge parameter must be positive, got {0}")]
    NonPositiveK(f64),

    #[error("target degrees of freedom {target} outside (0, {max}]")]
    TargetOutOfRange { target: f64, max: usize },

    #[error("estimator undefined: {0}")]
    Undefined(String),

    #[error("leading components carry no signal (sum of squared coefficients is zero)")]
    ZeroSignal,

    #[error("component count {r} outside [1, {max}]")]
    ROutOfRange { r: usize, max: usize },

    #[error("cross-validation with {folds} folds on {n} observations leaves a fold too small")]
    FoldTooSmall { folds: usize, n: usize },

    #[error("coefficient vector has zero norm")]
    ZeroNorm,

    #[error("labels must be 0 or 1, found {value} at row {row}")]
    NonBinaryLabels { row: usize, value: f64 },

    #[error("all fitted probabilities are degenerate (0 or 1)")]
    DegenerateWeights,

    #[error("logistic fit diverged (separation) after {iterations} iterations")]
    Separation { iterations: usize },

    #[error("{selected} predictors selected but only {n} observations")]
    TooManySelected { selected: usize, n: usize },

    #[error("only {eligible} SNPs fall in the MAF range, {needed} causal SNPs requested")]
    InsufficientEligibleSnps { eligible: usize, needed: usize },

    #[error("case/control quotas not filled after {draws} draws")]
    QuotaUnreachable { draws: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("ragged rows: line {line} has {found} fields, expected {expected}")]
    RaggedRows {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("input file is empty")]
    EmptyFile,

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
