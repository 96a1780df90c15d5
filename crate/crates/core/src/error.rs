use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("time step {dt} exceeds the CFL limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("non-finite value at grid node {index:?} (z = {coords:?})")]
    NonFiniteValue { index: [usize; 4], coords: [f64; 4] },
    #[error("NaN in interpolation query")]
    NanQuery,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("aggregation needs at least one barrier value")]
    NoObstacles,
    #[error("non-finite rate for obstacle {0}")]
    NonFiniteRate(usize),
    #[error("timestamps must increase: previous {previous}, current {current}")]
    NonMonotoneTime { previous: f64, current: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("could not place {what} after {attempts} attempts")]
    Placement { what: &'static str, attempts: usize },
    #[error("pedestrian {index} violated the disturbance bounds")]
    NonCompliant { index: usize },
}
