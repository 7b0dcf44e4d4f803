use thiserror::Error;

/// Errors produced anywhere in the simulation and control stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not antisymmetric (|M + M^T|_F = {0:e})")]
    NotAntisymmetric(f64),
    #[error("tilt decomposition is singular: b3z = {0} (vehicle inverted)")]
    TiltSingularity(f64),
    #[error("non-finite state at t = {0} s")]
    NonFiniteState(f64),
    #[error("time step {0} s outside (0, 5 ms]")]
    InvalidTimeStep(f64),
    #[error("commanded acceleration norm {0} m/s^2 too small to define a thrust direction")]
    DegenerateThrust(f64),
    #[error("allocation infeasible: {0}")]
    InfeasibleAllocation(String),
    #[error("damage refinement is ill-conditioned")]
    IllConditioned,
    #[error("yaw rate must be positive, got {0} rad/s")]
    ZeroRate(f64),
    #[error("drag coefficient times area is zero: steady yaw rate unbounded")]
    ZeroDrag,
    #[error("time {t} s outside trajectory span [0, {duration}] s")]
    OutOfRange { t: f64, duration: f64 },
    #[error("log is empty")]
    EmptyLog,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
