use thiserror::Error;

pub type Result<T> = std::result::Result<T, StqgError>;

#[derive(Debug, Error)]
pub enum StqgError {
    #[error("invalid grid: {0}")]
    InvalidSpec(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("fields live on different grids")]
    SpecMismatch,

    #[error("{what} must have zero mean, found mean {mean:e}")]
    NonZeroMean { what: String, mean: f64 },

    #[error("face velocity is not discretely divergence-free (max |div| = {max_div:e})")]
    NotDivergenceFree { max_div: f64 },

    #[error("noise index {index} out of range for a basis of {len} fields")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state produced in stage {stage} of the step")]
    BlowUp { stage: usize },

    #[error("degenerate table: {0}")]
    DegenerateTable(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StqgError {
    /// Errors that come from reading or writing files rather than from the
    /// numbers or the configuration.
    pub fn is_io(&self) -> bool {
        matches!(self, StqgError::Io(_) | StqgError::Snapshot(_))
    }
}
