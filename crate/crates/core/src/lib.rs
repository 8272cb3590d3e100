//! Joint calibration of noise covariances and kinematic offsets for
//! legged-robot state estimation.
//!
//! The library solves a bi-level program: the lower level is a
//! full-information MAP smoother over the robot's state trajectory, the
//! upper level is a trust-region Frank-Wolfe loop that moves covariance
//! and kinematic parameters so that the smoothed trajectory matches
//! motion-capture ground truth. Gradients of the upper loss flow through
//! the smoother via the implicit function theorem and a sparse
//! block-tridiagonal solve.
//!
//! Module map:
//! - [`manifold`]: SO(3)/SE(3) algebra and the product state manifold.
//! - [`robot`]: leg kinematics, IMU process model, proprioceptive
//!   measurement model, covariance assembly.
//! - [`theta`]: the flattened calibration parameter vector and its frozen
//!   ordering.
//! - [`estimator`]: the full-information MAP solver (damped Gauss-Newton
//!   on the trajectory manifold).
//! - [`sensitivity`]: implicit differentiation of the smoother solution.
//! - [`calibrator`]: upper loss, chain-rule gradient, LMO, Armijo line
//!   search, Frank-Wolfe loop.
//! - [`datagen`]: synthetic gait/sensor generation with known ground truth.
//! - [`io`]: log, parameter, trace and config file formats.

pub mod calibrator;
pub mod datagen;
pub mod error;
pub mod estimator;
pub mod io;
pub mod manifold;
pub mod robot;
pub mod scenarios;
pub mod sensitivity;
pub mod theta;

pub use error::{Error, Result};
