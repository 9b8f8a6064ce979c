use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("time {t} outside [0, 1]")]
    TimeOutOfRange { t: f64 },
    #[error("bridge requires t <= r, got t = {t}, r = {r}")]
    ReversedInterval { t: f64, r: f64 },
    #[error("band check needs n >= 16 so that log log log n > 0, got n = {0}")]
    ScheduleTooShort(usize),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("time {t} lies within {dt} of a schedule knot")]
    KnotTime { t: f64, dt: f64 },
    #[error("unsupported dimension {0}: grid evaluations need d <= 2")]
    GridDimension(usize),
    #[error("grids do not share axes")]
    GridMismatch,
    #[error("batch has no retained {0}")]
    MissingData(&'static str),
    #[error("not enough paths: need {needed}, got {got}")]
    InsufficientPaths { needed: usize, got: usize },
    #[error("clipping with the true score needs an analytic target")]
    NoTargetForClip,
    #[error("negative radicand {0} in bound evaluation")]
    NegativeRadicand(f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
