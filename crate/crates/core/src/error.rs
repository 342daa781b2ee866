use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants are grouped by the CLI exit code they map to: configuration
/// problems exit with 1, data problems with 2 and numeric failures with 3.
#[derive(Debug, Error)]
pub enum Error {
    // --- data ---
    #[error("dataset is empty")]
    EmptyData,
    #[error("non-finite value in row {row}, column {column}")]
    NonFinite { row: usize, column: String },
    #[error("arm {arm} in row {row} is outside 0..{m}")]
    ArmOutOfRange { row: usize, arm: usize, m: usize },
    #[error("row {row} has {got} covariates, expected {expected}")]
    RaggedRows { row: usize, got: usize, expected: usize },
    #[error("arm {arm} has no training units{}", fold.map(|k| format!(" outside fold {k}")).unwrap_or_default())]
    DegenerateArm { arm: usize, fold: Option<usize> },
    #[error("malformed CSV: {0}")]
    Csv(String),

    // --- configuration / contract ---
    #[error("fold count {k} is invalid for n = {n}")]
    BadK { k: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sensitivity parameter must be finite and >= 1, got {0}")]
    BadLambda(f64),
    #[error("operation requires a binary treatment, got m = {0}")]
    NotBinary(usize),
    #[error("policy class `{class}` does not support m = {m} arms")]
    UnsupportedClassForArms { class: String, m: usize },
    #[error("policy class `{0}` cannot be optimized exhaustively")]
    UnsupportedClass(String),
    #[error("quadrant search needs two distinct feature indices")]
    NeedTwoFeatures,
    #[error("tree depth must be 1 or 2, got {0}")]
    BadDepth(usize),
    #[error("nuisance model is missing {0}")]
    MissingNuisance(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),

    // --- numeric ---
    #[error("propensity {0} is outside (0, 1)")]
    PropensityOutOfRange(f64),
    #[error("bound inputs are unordered: lower {lower} > upper {upper}")]
    UnorderedInput { lower: f64, upper: f64 },
    #[error("invalid finite law: {0}")]
    BadLaw(String),
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("root bracketing failed: {0}")]
    RootBracketFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            BadK { .. }
            | DimensionMismatch { .. }
            | BadLambda(_)
            | NotBinary(_)
            | UnsupportedClassForArms { .. }
            | UnsupportedClass(_)
            | NeedTwoFeatures
            | BadDepth(_)
            | MissingNuisance(_)
            | BadConfig(_)
            | Json(_) => 1,
            EmptyData
            | NonFinite { .. }
            | ArmOutOfRange { .. }
            | RaggedRows { .. }
            | DegenerateArm { .. }
            | Csv(_)
            | Io(_) => 2,
            PropensityOutOfRange(_)
            | UnorderedInput { .. }
            | BadLaw(_)
            | Infeasible
            | RootBracketFailure(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
