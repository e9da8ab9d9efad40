use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty matrix")]
    EmptyMatrix,

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("resource limit exceeded: {what} is {value}, limit {limit}")]
    Limit {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("unknown subsystem `{0}`")]
    UnknownSubsystem(String),

    #[error("fragment carries no subsystem tags")]
    MissingSubsystems,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("fragment `{name}` failed validation: {summary}")]
    InvalidFragment { name: String, summary: String },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("tomography did not converge for dimension {dimension} after {alternations} alternations")]
    NonConvergence {
        dimension: usize,
        alternations: usize,
    },

    #[error("no dimension up to {max_dimension} satisfies the selection rule")]
    SelectionFailure { max_dimension: usize },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by exceeding a desk-scale size limit.
    pub fn is_resource_limit(&self) -> bool {
        matches!(self, Error::Limit { .. })
    }
}
