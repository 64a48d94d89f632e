use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("hypothesis budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
