use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("smoothness matrix is tabulated up to order 6, got order {0}")]
    UnsupportedOrder(usize),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("embedding window of order {order} around index {center} does not fit in {len} samples")]
    Boundary {
        center: usize,
        order: usize,
        len: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(what: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::DimensionMismatch {
        what,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
