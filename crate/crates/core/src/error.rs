use thiserror::Error;

/// Errors produced by data validation, model fitting, and inference.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("non-binary treatment value `{value}` at row {row}, column `{column}`")]
    NonBinaryTreatment {
        row: usize,
        column: String,
        value: String,
    },

    #[error("missing value at row {row}, column `{column}`")]
    MissingCell { row: usize, column: String },

    #[error("unparseable value `{value}` at row {row}, column `{column}`")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },

    #[error("dataset has {0} rows; at least 4 are required")]
    TooFewRows(usize),

    #[error("treatment arm {0} is empty")]
    EmptyArm(u8),

    #[error("design randomization probability {0} must lie strictly in (0, 1)")]
    InvalidPi(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("log10 transform of non-positive value {value} in column `{column}` (offset {offset})")]
    NonPositiveLog {
        column: String,
        value: f64,
        offset: f64,
    },

    #[error("rank-deficient design in arm {arm}: columns {columns:?} are constant or collinear")]
    RankDeficient { arm: u8, columns: Vec<String> },

    #[error("arm {arm} has {n_arm} units; {required} are needed for {n_params} predictors")]
    InsufficientArmSize {
        arm: u8,
        n_arm: usize,
        n_params: usize,
        required: usize,
    },

    #[error("leverage=1 at unit {unit} in arm {arm}; HC2/HC3 corrections are undefined")]
    UnitLeverage { arm: u8, unit: usize },

    #[error("non-positive HC1 degrees of freedom in arm {arm} (n={n_arm}, p={n_params})")]
    NonPositiveDf {
        arm: u8,
        n_arm: usize,
        n_params: usize,
    },

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{count} of {total} permutations exceed the exhaustive cap {cap}")]
    PermutationCap { count: u128, total: u128, cap: u64 },

    #[error("estimator `{estimator}` failed in {failed} of {total} replicates (limit is < 1%)")]
    ExcessiveFailures {
        estimator: String,
        failed: usize,
        total: usize,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroDenominator(_) | Error::ExcessiveFailures { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
