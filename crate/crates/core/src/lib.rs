//! Quasi-static simulator and control stack for an articulated, wheel-driven
//! in-pipe inspection robot.
//!
//! The robot braces against the pipe wall with an actively torqued middle
//! joint and drives on the resulting friction. Joint torque is commanded
//! open-loop as a PWM duty ratio; this crate maps duty to torque, torque to
//! wall forces, and forces to advance-or-slip along a 1-D pipe course, and
//! wraps it in the command/telemetry protocol the operator uses.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuation;
pub mod calibration;
pub mod canbus;
pub mod error;
pub mod firmware;
pub mod geometry;
pub mod harness;
pub mod mechanics;
pub mod robot;

pub use error::{ActuationError, CalibrationError, ConfigError, DecodeError, FrameError, GeometryError, ScenarioError};
