use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel singularity: points coincide (distance {0:e})")]
    Singularity(f64),

    #[error("singular redraw budget exhausted after {0} attempts")]
    RedrawExhausted(usize),

    #[error("degenerate quantity: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no closed form available: {0}")]
    NoClosedForm(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
