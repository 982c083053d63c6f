use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IppError {
    #[error("pose ({x}, {y}) lies outside the {width} x {height} m world")]
    OutOfBounds { x: f64, y: f64, width: f64, height: f64 },

    #[error("cell {0} is outside the map")]
    CellOutOfRange(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, IppError>;
