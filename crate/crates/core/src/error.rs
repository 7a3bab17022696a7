use thiserror::Error;

use crate::ingest::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error("range must be positive and finite, got {0}")]
    NonPositiveRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("measurement list is empty")]
    EmptyMeasurements,
    #[error("too few anchors: {found} measured, need at least {needed}")]
    TooFewAnchors { found: usize, needed: usize },
    #[error("too few devices: {found} usable, need at least {needed}")]
    TooFewDevices { found: usize, needed: usize },
    #[error("insufficient data: {n_anchors} anchors and {n_devices} devices (need >= 5 anchors and >= 4 devices)")]
    InsufficientData { n_anchors: usize, n_devices: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("id mismatch: {0}")]
    IdMismatch(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}
