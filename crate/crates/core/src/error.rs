use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}, line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("forest area is zero in year {year}; rate for year {} is undefined", year + 1)]
    ZeroForest { year: i32 },

    #[error("year {0} is not available")]
    MissingYear(i32),

    #[error("total pooling weight is zero")]
    ZeroWeight,

    #[error("covariate `{0}` has zero variance")]
    ConstantColumn(String),

    #[error("only {available} donors remain after auditing, {required} required (shortfall {})", required - available)]
    TooFewDonors { available: usize, required: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("ridge system is singular at lambda = 0; use a positive ridge penalty")]
    SingularRidge,

    #[error("covariance matrix is singular; Mahalanobis distance is undefined")]
    SingularCovariance,

    #[error("donor ordering differs between synthetic weights and outcome models")]
    DonorMismatch,

    #[error("need at least {required} pre-shock periods, found {available}")]
    TooFewPrePeriods { required: usize, available: usize },

    #[error("leave-one-out refit omitting year {year} failed: {source}")]
    Refit { year: i32, source: Box<Error> },

    #[error("no treated unit could be fitted: {0}")]
    AllUnitsFailed(String),

    #[error("invalid simulation spec: {0}")]
    Spec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("split variable `{0}` is missing from the covariate record")]
    MissingVariable(String),

    #[error("unknown figure `{key}`; valid keys: {valid}")]
    UnknownFigure { key: String, valid: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// True for errors caused by malformed inputs rather than a failing computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InvalidPanel(_)
                | Error::ZeroForest { .. }
                | Error::Spec(_)
                | Error::Config(_)
                | Error::UnknownFigure { .. }
                | Error::NonFinite(_)
                | Error::Csv(_)
        )
    }
}
