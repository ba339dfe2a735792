use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the operation's domain (bad probability, non-unitary
    /// block, mismatched table, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// A fit ran out of iterations or produced a singular normal matrix.
    #[error("fit did not converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
