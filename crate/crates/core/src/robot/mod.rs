//! Legged-robot model: kinematics description, the IMU-driven discrete
//! process model, and the contact-gated proprioceptive measurement model.

pub mod cov;
pub mod leg;

pub use cov::{
    assemble_prior_cov, assemble_process_cov, induced_measurement_cov, noise_mapping, r_z,
    CovBlock, CovarianceSpec, PriorCov, PriorNoise, ProcessNoise, CALIBRATED_BLOCKS, PD_FLOOR,
};
pub use leg::{
    forward_kinematics, inverse_kinematics, joint_rates_for, leg_jacobian, leg_jacobian_dot,
    leg_kinematics, LegGeometry, LegKin,
};

use nalgebra::Vector3;

use crate::manifold::{zeta, ManifoldState};

/// Gravity in the world frame, m/s^2.
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

/// Kinematic description of the robot: leg count and per-leg geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotKinematics {
    pub name: String,
    pub legs: Vec<LegGeometry>,
    /// Default box half-width for the kinematic offset parameters, meters.
    pub offset_bound: f64,
}

impl RobotKinematics {
    pub fn n_f(&self) -> usize {
        self.legs.len()
    }
}

/// A 4-leg point-foot robot with hip-roll/hip-pitch/knee legs and mid-size
/// quadruped dimensions. Leg order: FL, FR, RL, RR.
pub fn default_robot() -> RobotKinematics {
    let (lx, ly) = (0.19, 0.047);
    let (l_hip, l_thigh, l_calf) = (0.08, 0.213, 0.213);
    let axes = [Vector3::x(), Vector3::y(), Vector3::y()];
    let leg = |mx: f64, my: f64, side: f64| LegGeometry {
        mount: Vector3::new(mx, my, 0.0),
        side,
        l_hip,
        l_thigh,
        l_calf,
        axes,
    };
    RobotKinematics {
        name: "quad-default".to_string(),
        legs: vec![
            leg(lx, ly, 1.0),
            leg(lx, -ly, -1.0),
            leg(-lx, ly, 1.0),
            leg(-lx, -ly, -1.0),
        ],
        offset_bound: 0.1,
    }
}

/// One IMU reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Specific force, m/s^2.
    pub accel: Vector3<f64>,
    /// Angular rate, rad/s, body frame.
    pub gyro: Vector3<f64>,
    /// Seconds.
    pub stamp: f64,
}

/// One joint-encoder/contact reading covering all legs.
#[derive(Debug, Clone, PartialEq)]
pub struct LegSample {
    pub joint_angles: Vec<Vector3<f64>>,
    pub joint_rates: Vec<Vector3<f64>>,
    pub contact: Vec<bool>,
}

/// Constant kinematic offsets: per-leg contact-point offset in the calf
/// frame, and the body-to-mocap marker offset in the body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicOffsets {
    pub foot: Vec<Vector3<f64>>,
    pub base: Vector3<f64>,
}

impl KinematicOffsets {
    pub fn zero(n_f: usize) -> Self {
        KinematicOffsets { foot: vec![Vector3::zeros(); n_f], base: Vector3::zeros() }
    }
}

/// Noise-free mean propagation of the state through one IMU sample.
///
/// Position and velocity integrate the bias-corrected specific force plus
/// gravity; the orientation composes the body-frame rotation increment;
/// feet and biases are constant.
pub fn process_propagate(x: &ManifoldState, u: &ImuSample, dt: f64) -> ManifoldState {
    debug_assert!(dt > 0.0);
    let r = &x.pose.rot;
    let accel_world = r.rotate(&(u.accel - x.accel_bias)) + GRAVITY;
    let mut out = x.clone();
    out.pose.trans = x.pose.trans + x.velocity * dt + accel_world * (0.5 * dt * dt);
    out.velocity = x.velocity + accel_world * dt;
    out.pose.rot = r.compose(&zeta(&((u.gyro - x.gyro_bias) * dt)));
    out
}

/// Model-predicted and sensor-derived values of one leg-odometry channel
/// pair, in the world frame.
#[derive(Debug, Clone)]
pub struct MeasPair {
    /// Model side `y_p = p - p_foot`.
    pub pos_model: Vector3<f64>,
    /// Measured side `-R_WB fk(alpha, theta_foot)`.
    pub pos_meas: Vector3<f64>,
    /// Model side `y_v = v`.
    pub vel_model: Vector3<f64>,
    /// Measured side `-R_WB (J alphadot + (omega - b_w) x fk)`.
    pub vel_meas: Vector3<f64>,
    /// Velocity channel participates only in stance.
    pub vel_active: bool,
}

/// Evaluate the leg-odometry measurement model for every leg.
pub fn measurement_predict(
    x: &ManifoldState,
    legs: &LegSample,
    u: &ImuSample,
    robot: &RobotKinematics,
    offsets: &KinematicOffsets,
) -> Vec<MeasPair> {
    let r = &x.pose.rot;
    let omega = u.gyro - x.gyro_bias;
    (0..robot.n_f())
        .map(|j| {
            let kin = leg_kinematics(
                robot,
                j,
                &legs.joint_angles[j],
                &legs.joint_rates[j],
                &offsets.foot[j],
            );
            MeasPair {
                pos_model: x.pose.trans - x.foot_pos[j],
                pos_meas: -r.rotate(&kin.fk),
                vel_model: x.velocity,
                vel_meas: -r.rotate(&(kin.jac * legs.joint_rates[j] + omega.cross(&kin.fk))),
                vel_active: legs.contact[j],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
