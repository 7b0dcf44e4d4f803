//! Quadrotor flight-dynamics simulator with a fault-tolerant control stack.

// `!(x > 0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod control;
pub mod detection;
pub mod drag;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod scalar;
pub mod so3;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases for the generic types.
pub type Params = dynamics::QuadrotorParams<f64>;
pub type State = dynamics::VehicleState<f64>;
pub type Controller = control::GeometricController<f64>;
pub type Detector = detection::FaultDetector<f64>;
pub type Traj = trajectory::Trajectory<f64>;
