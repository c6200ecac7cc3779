use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("duplicate record for claim {claim_id}, development year {dev_year}")]
    DuplicateRecord { claim_id: String, dev_year: u32 },

    #[error("inconsistent data at row {row}: {message}")]
    Consistency { row: usize, message: String },

    #[error("invalid portfolio: {0}")]
    InvalidPortfolio(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate exposure: zero denominator for development year {dev_year}")]
    DegenerateExposure { dev_year: u32 },

    #[error("estimability error: {0}")]
    Estimability(String),

    #[error("complete separation: {0}")]
    Separation(String),

    #[error("no convergence after {iterations} iterations: {message}")]
    NonConvergence { iterations: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("prediction error: missing covariate `{0}`")]
    MissingCovariate(String),

    #[error("fitting layer `{layer}` failed: {message}")]
    Fitting { layer: String, message: String },

    #[error("model state error: {0}")]
    State(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("models are not nested: likelihood ratio statistic {0} is negative")]
    Nesting(f64),

    #[error("importance undefined for an empty ensemble")]
    UndefinedImportance,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by invalid user-supplied configuration or input
    /// layout, as opposed to failures while computing.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Config(_)
                | Error::DuplicateRecord { .. }
                | Error::Consistency { .. }
                | Error::InvalidPortfolio(_)
                | Error::Json(_)
        )
    }
}
