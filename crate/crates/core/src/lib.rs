//! Range-only backstepping encirclement of a stationary target.
//!
//! A unicycle robot with constant forward speed steers its heading rate so
//! that its measured distance to a target tracks a smooth reference command.
//! The controller only sees the scalar range; the range rate is recovered by
//! a washout filter.
//!
//! Modules, bottom-up:
//!
//! * [`signals`]: reference distance commands and their derivative bounds.
//! * [`plant`]: unicycle kinematics, range sensor, ground-truth polar state.
//! * [`estimator`]: washout filter estimating the range rate.
//! * [`controller`]: the backstepping control law and its gain conditions.
//! * [`analysis`]: linearization, Lyapunov functions, decay fit, phase detection.
//! * [`harness`]: closed-loop runs, batches, logs and the interior-equilibrium stress test.

pub mod analysis;
pub mod controller;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod plant;
pub mod signals;

pub use error::{Error, Result};
