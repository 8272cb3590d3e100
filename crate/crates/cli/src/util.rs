//! Shared plumbing: verbosity, exit-code mapping, metric computation.

use std::process::ExitCode;

use legcal_core::datagen::{MocapSample, SensorLog, TruthBundle};
use legcal_core::error::Error;
use legcal_core::manifold::{se3_log, ManifoldState};
use legcal_core::robot::RobotKinematics;
use legcal_core::Result;

/// Effective verbosity: `--verbose` count, overridden by `CALIB_LOG_LEVEL`.
pub fn log_level(flag_count: u8) -> u8 {
    std::env::var("CALIB_LOG_LEVEL")
        .ok()
        .and_then(|v| v.parse::<u8>().ok())
        .unwrap_or(flag_count)
}

pub fn info(level: u8, msg: &str) {
    if level >= 1 {
        eprintln!("[legcal] {msg}");
    }
}

pub fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Io(_)
        | Error::Config(_)
        | Error::SchemaVersionMismatch { .. }
        | Error::MalformedRecord { .. }
        | Error::LengthMismatch { .. }
        | Error::BoxViolation { .. } => ExitCode::from(2),
        Error::NotPd { .. }
        | Error::NotFactorizable { .. }
        | Error::AngleNearPi { .. }
        | Error::IkOutOfRange { .. }
        | Error::LineSearchExhausted { .. } => ExitCode::from(3),
    }
}

/// Load the robot description or fall back to the built-in quadruped.
pub fn load_robot_or_default(path: Option<&std::path::Path>) -> Result<RobotKinematics> {
    match path {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("robot file '{}' does not exist", p.display())));
            }
            legcal_core::io::load_robot(p)
        }
        None => Ok(legcal_core::robot::default_robot()),
    }
}

/// Velocity RMSE and orientation RMSE (norm of the rotation log error)
/// against the mocap stream, which is the observable ground truth.
pub fn rmse_vs_mocap(trajectory: &[ManifoldState], mocap: &[MocapSample]) -> Result<(f64, f64)> {
    if trajectory.len() != mocap.len() {
        return Err(Error::LengthMismatch {
            left: trajectory.len(),
            right: mocap.len(),
            context: "trajectory vs mocap".to_string(),
        });
    }
    let mut sum_v = 0.0;
    let mut sum_e = 0.0;
    for (x, gt) in trajectory.iter().zip(mocap.iter()) {
        sum_v += (x.velocity - gt.velocity).norm_squared();
        let rot_err = x.pose.rot.compose(&gt.pose.rot.inverse());
        let xi = se3_log(&legcal_core::manifold::Pose::new(rot_err, nalgebra::Vector3::zeros()))?;
        sum_e += xi.norm_squared();
    }
    let n = trajectory.len() as f64;
    Ok(((sum_v / n).sqrt(), (sum_e / n).sqrt()))
}

/// Per-parameter error against the generating truth, when present.
pub fn theta_error(
    layout: &legcal_core::theta::ThetaLayout,
    theta: &nalgebra::DVector<f64>,
    truth: &TruthBundle,
) -> Vec<(String, f64)> {
    let truth_theta = layout.pack(&truth.cov, &truth.offsets);
    layout
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.name.clone(), theta[i] - truth_theta[i]))
        .collect()
}

/// Build the estimation problem for a log with explicit parameters.
pub fn problem_for(
    robot: &RobotKinematics,
    log: &SensorLog,
    cov: legcal_core::robot::CovarianceSpec,
    offsets: legcal_core::robot::KinematicOffsets,
    settings: legcal_core::estimator::SolverSettings,
    truth: Option<&TruthBundle>,
) -> legcal_core::estimator::EstimationProblem {
    let mut prior_mean = match truth {
        Some(t) => t.states[0].clone(),
        None => {
            // mocap-derived prior: marker pose (offset unknown at this
            // point), mocap velocity, feet from the kinematic chain
            let mut x = ManifoldState::new(robot.n_f());
            x.pose = log.mocap[0].pose;
            x.velocity = log.mocap[0].velocity;
            x
        }
    };
    prior_mean.accel_bias = nalgebra::Vector3::zeros();
    prior_mean.gyro_bias = nalgebra::Vector3::zeros();
    for j in 0..robot.n_f() {
        let fk = legcal_core::robot::forward_kinematics(
            robot,
            j,
            &log.legs[0].joint_angles[j],
            &offsets.foot[j],
        );
        prior_mean.foot_pos[j] = prior_mean.pose.transform(&fk);
    }
    legcal_core::estimator::EstimationProblem {
        robot: robot.clone(),
        dt: log.dt,
        imu: log.imu.clone(),
        legs: log.legs.clone(),
        prior_mean,
        cov,
        offsets,
        settings,
    }
}
