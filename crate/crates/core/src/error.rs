use thiserror::Error;

use crate::geo::{CellId, IntervalId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("point ({x:.3}, {y:.3}) lies outside the grid extent")]
    OutOfExtent { x: f64, y: f64 },

    #[error("range error: {0}")]
    Range(String),

    #[error("scheme mismatch:\n  left:  {left}\n  right: {right}")]
    SchemeMismatch { left: String, right: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("posterior undefined for interval {0}: no prior mass and no pseudo-counts")]
    UndefinedPosterior(IntervalId),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("constant series for cell {0:?}")]
    ConstantSeries(Option<CellId>),

    #[error("duplicate census cell {0}")]
    DuplicateCell(CellId),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
