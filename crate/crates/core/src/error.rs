use thiserror::Error;

pub type Result<T> = std::result::Result<T, ResiError>;

#[derive(Debug, Error)]
pub enum ResiError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("ragged csv: record {record} has {found} fields, header has {expected}")]
    RaggedRow {
        record: usize,
        expected: usize,
        found: usize,
    },

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("formula error: {0}")]
    Formula(String),

    #[error("categorical column `{0}` has a single level after missing-value deletion")]
    SingleLevelFactor(String),

    #[error("no complete rows remain after missing-value deletion")]
    NoRows,

    #[error("response column `{0}` is not numeric")]
    NonNumericResponse(String),

    #[error("design matrix is rank deficient: column `{column}` is collinear with earlier columns")]
    RankDeficient { column: String },

    #[error("not enough observations: n = {n}, parameters = {p}")]
    TooFewObservations { n: usize, p: usize },

    #[error("invalid response: {0}")]
    InvalidResponse(String),

    #[error("singular gradient")]
    SingularGradient,

    #[error("iteration limit of {0} reached without convergence")]
    IterationLimit(usize),

    #[error("step factor reduced below minimum without decreasing the residual sum of squares")]
    StepFactor,

    #[error("model evaluation produced non-finite values")]
    NonFinite,

    #[error("model did not converge")]
    NotConverged,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("leverage equals one at row {row}; HC2/HC3 undefined")]
    UnitLeverage { row: usize },

    #[error("zero standard error for `{0}`")]
    ZeroStdError(String),

    #[error("models are not nested: {0}")]
    NonNested(String),

    #[error("no parameters to test")]
    NoTestedParameters,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("bootstrap failed: 0 successful replicates out of {attempts} attempts")]
    BootstrapFailed { attempts: usize },

    #[error("bootstrap replicates were not stored; rerun with replicate storage enabled (--store-boot) to re-extract intervals")]
    ReplicatesNotStored,
}

impl ResiError {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        use ResiError::*;
        match self {
            RankDeficient { .. }
            | TooFewObservations { .. }
            | SingularGradient
            | IterationLimit(_)
            | StepFactor
            | NonFinite
            | NotConverged
            | Singular(_)
            | UnitLeverage { .. }
            | ZeroStdError(_) => 3,
            BootstrapFailed { .. } => 4,
            _ => 2,
        }
    }

    /// True for errors that make a bootstrap replicate count as a failed attempt.
    pub fn is_fit_failure(&self) -> bool {
        self.exit_code() == 3
            || matches!(
                self,
                ResiError::SingleLevelFactor(_) | ResiError::NoRows | ResiError::InvalidResponse(_)
            )
    }
}

impl From<csv::Error> for ResiError {
    fn from(err: csv::Error) -> Self {
        match err.kind() {
            csv::ErrorKind::UnequalLengths {
                pos,
                expected_len,
                len,
            } => ResiError::RaggedRow {
                record: pos.as_ref().map(|p| p.record() as usize).unwrap_or(0),
                expected: *expected_len as usize,
                found: *len as usize,
            },
            _ => ResiError::Csv(err.to_string()),
        }
    }
}
