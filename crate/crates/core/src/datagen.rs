//! Deterministic synthetic data: scripted quadruped gaits, kinematically
//! consistent ground truth, and seeded sensor synthesis with known noise
//! covariances and injected kinematic offsets.
//!
//! The base trajectory is produced by the estimator's own discrete
//! propagation driven by piecewise-constant noise-free inputs, so the truth
//! satisfies the process model exactly. Joint angles come from per-leg
//! inverse kinematics of the true (offset) contact point, and joint rates
//! from the instantaneous velocity relation, so every measurement residual
//! vanishes at the truth on noise-free logs.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::manifold::{ManifoldState, Pose, Rotation};
use crate::robot::{
    inverse_kinematics, joint_rates_for, leg_kinematics, process_propagate, CovBlock,
    CovarianceSpec, ImuSample, KinematicOffsets, LegSample, PriorCov, RobotKinematics, GRAVITY,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaitType {
    Stand,
    Trot,
}

/// Scripted gait parameters. Trot alternates diagonal pairs at 50% duty, so
/// two feet are always in stance.
#[derive(Debug, Clone)]
pub struct GaitScript {
    pub gait: GaitType,
    pub duration: f64,
    pub dt: f64,
    /// Constant world-frame forward speed, m/s.
    pub body_speed: f64,
    /// Full gait cycle, seconds.
    pub gait_period: f64,
    pub step_height: f64,
    pub base_height: f64,
    /// Sinusoidal yaw-rate excitation.
    pub yaw_rate_amplitude: f64,
    pub yaw_rate_period: f64,
}

impl GaitScript {
    pub fn stand(duration: f64, dt: f64) -> Self {
        GaitScript {
            gait: GaitType::Stand,
            duration,
            dt,
            body_speed: 0.0,
            gait_period: 0.5,
            step_height: 0.05,
            base_height: 0.33,
            yaw_rate_amplitude: 0.0,
            yaw_rate_period: 2.0,
        }
    }

    pub fn trot(duration: f64, dt: f64, body_speed: f64) -> Self {
        GaitScript {
            gait: GaitType::Trot,
            duration,
            dt,
            body_speed,
            gait_period: 0.5,
            step_height: 0.05,
            base_height: 0.33,
            yaw_rate_amplitude: 0.25,
            yaw_rate_period: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.002..=0.02).contains(&self.dt) {
            return Err(Error::Config(format!("dt {} outside [0.002, 0.02]", self.dt)));
        }
        if self.duration <= 0.0 || self.gait_period < 4.0 * self.dt {
            return Err(Error::Config("degenerate duration or gait period".to_string()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    fn yaw_rate(&self, t: f64) -> f64 {
        if self.yaw_rate_amplitude == 0.0 {
            0.0
        } else {
            self.yaw_rate_amplitude * (2.0 * std::f64::consts::PI * t / self.yaw_rate_period).sin()
        }
    }

    /// Stance flag of leg `j` at time `t`. Trot pairs: (FL, RR) and (FR, RL).
    fn in_stance(&self, j: usize, t: f64) -> bool {
        match self.gait {
            GaitType::Stand => true,
            GaitType::Trot => {
                let offset = if j == 0 || j == 3 { 0.0 } else { 0.5 };
                let phase = (t / self.gait_period + offset).fract();
                phase < 0.5
            }
        }
    }
}

/// White-noise and bias-walk magnitudes used by the sensor synthesis.
#[derive(Debug, Clone)]
pub struct NoiseScales {
    pub accel_std: f64,
    pub gyro_std: f64,
    pub joint_std: f64,
    pub joint_rate_std: f64,
    /// Bias random-walk densities; per-step std is `walk * sqrt(dt)`.
    pub accel_bias_walk: f64,
    pub gyro_bias_walk: f64,
    pub accel_bias_init: Vector3<f64>,
    pub gyro_bias_init: Vector3<f64>,
}

impl NoiseScales {
    pub fn zero() -> Self {
        NoiseScales {
            accel_std: 0.0,
            gyro_std: 0.0,
            joint_std: 0.0,
            joint_rate_std: 0.0,
            accel_bias_walk: 0.0,
            gyro_bias_walk: 0.0,
            accel_bias_init: Vector3::zeros(),
            gyro_bias_init: Vector3::zeros(),
        }
    }
}

/// Covariance specification consistent with the synthesis model, floored to
/// stay positive definite when a noise channel is disabled.
pub fn implied_true_cov(scales: &NoiseScales, dt: f64) -> CovarianceSpec {
    let fl = |v: f64, floor: f64| v.max(floor);
    CovarianceSpec {
        // position row collects the (dt^2 / 2) share of accelerometer noise
        q_pos: CovBlock::iso(fl(0.25 * scales.accel_std.powi(2) * dt.powi(3), 1e-12)),
        q_vel: CovBlock::iso(fl(scales.accel_std.powi(2), 1e-12)),
        q_rot: CovBlock::iso(fl(scales.gyro_std.powi(2), 1e-12)),
        q_foot: CovBlock::iso(1e-10),
        q_accel_bias: CovBlock::iso(fl(scales.accel_bias_walk.powi(2), 1e-12)),
        q_gyro_bias: CovBlock::iso(fl(scales.gyro_bias_walk.powi(2), 1e-12)),
        r_joint: CovBlock::iso(fl(scales.joint_std.powi(2), 1e-8)),
        r_joint_rate: CovBlock::iso(fl(scales.joint_rate_std.powi(2), 1e-8)),
        prior: PriorCov::iso(1e-4, 1e-4, 1e-2, 1e-2, 1e-4, 1e-4),
    }
}

/// Mocap record: marker pose (position offset by the base-to-marker vector)
/// and base velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct MocapSample {
    pub pose: Pose,
    pub velocity: Vector3<f64>,
}

/// Time-indexed sensor streams; the estimator's input.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorLog {
    pub dt: f64,
    pub imu: Vec<ImuSample>,
    pub legs: Vec<LegSample>,
    pub mocap: Vec<MocapSample>,
}

impl SensorLog {
    pub fn len(&self) -> usize {
        self.imu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.imu.is_empty()
    }
}

/// Ground truth attached to a synthetic log.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthBundle {
    pub states: Vec<ManifoldState>,
    pub cov: CovarianceSpec,
    pub offsets: KinematicOffsets,
    pub seed: u64,
}

/// Kinematic truth before sensor synthesis (biases still zero).
#[derive(Debug, Clone)]
pub struct MotionTruth {
    pub states: Vec<ManifoldState>,
    pub joint_angles: Vec<Vec<Vector3<f64>>>,
    pub joint_rates: Vec<Vec<Vector3<f64>>>,
    pub contact: Vec<Vec<bool>>,
    /// True body angular rate per step (piecewise constant input).
    pub body_rates: Vec<Vector3<f64>>,
    /// True world-frame acceleration per step.
    pub world_accels: Vec<Vector3<f64>>,
    pub dt: f64,
}

/// Quintic blend with zero velocity and acceleration at both ends.
fn quintic(tau: f64) -> (f64, f64) {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let value = 10.0 * t3 - 15.0 * t3 * tau + 6.0 * t3 * t2;
    let rate = 30.0 * t2 - 60.0 * t3 + 30.0 * t2 * t2;
    (value, rate)
}

/// Swing-height bump with zero end velocities.
fn swing_z(tau: f64, height: f64) -> (f64, f64) {
    let a = 2.0 * std::f64::consts::PI;
    ((1.0 - (a * tau).cos()) * 0.5 * height, (a * tau).sin() * 0.5 * a * height)
}

/// Generate the kinematically consistent trajectory for a script: stance
/// feet world-fixed, swing feet on smooth splines, base driven through the
/// discrete process model.
pub fn generate_trajectory(
    script: &GaitScript,
    robot: &RobotKinematics,
    offsets_true: &KinematicOffsets,
) -> Result<MotionTruth> {
    script.validate()?;
    let n_f = robot.n_f();
    let steps = script.steps();
    let dt = script.dt;

    // base states by exact discrete propagation of noise-free inputs
    let mut states: Vec<ManifoldState> = Vec::with_capacity(steps + 1);
    let mut body_rates = Vec::with_capacity(steps + 1);
    let mut world_accels = Vec::with_capacity(steps + 1);
    let mut x = ManifoldState::new(n_f);
    x.pose = Pose::new(Rotation::identity(), Vector3::new(0.0, 0.0, script.base_height));
    x.velocity = Vector3::new(script.body_speed, 0.0, 0.0);
    states.push(x);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let omega = Vector3::new(0.0, 0.0, script.yaw_rate(t));
        let accel_world = Vector3::zeros();
        body_rates.push(omega);
        world_accels.push(accel_world);
        if k < steps {
            let imu = ImuSample {
                accel: states[k].pose.rot.inverse_rotate(&(accel_world - GRAVITY)),
                gyro: omega,
                stamp: t,
            };
            let next = process_propagate(&states[k], &imu, dt);
            states.push(next);
        }
    }

    // contact schedule
    let contact: Vec<Vec<bool>> = (0..=steps)
        .map(|k| (0..n_f).map(|j| script.in_stance(j, k as f64 * dt)).collect())
        .collect();

    // foothold helper: project the hip's nominal stance point to the ground
    let nominal_xy = |k: usize, j: usize| -> Vector3<f64> {
        let w = states[k].pose.transform(&robot.legs[j].nominal_stance());
        Vector3::new(w.x, w.y, 0.0)
    };

    // per-leg, per-step foot position and velocity in the world
    let mut foot_pos = vec![vec![Vector3::zeros(); n_f]; steps + 1];
    let mut foot_vel = vec![vec![Vector3::zeros(); n_f]; steps + 1];
    for j in 0..n_f {
        let mut k = 0;
        let mut prev_stone = nominal_xy(0, j);
        while k <= steps {
            let run_start = k;
            let stance = contact[k][j];
            while k <= steps && contact[k][j] == stance {
                k += 1;
            }
            let run_end = k; // exclusive
            if stance {
                let mid = (run_start + run_end - 1) / 2;
                let stone = nominal_xy(mid, j);
                for kk in run_start..run_end {
                    foot_pos[kk][j] = stone;
                    foot_vel[kk][j] = Vector3::zeros();
                }
                prev_stone = stone;
            } else {
                // swing toward the next stance run's stone
                let target = if run_end <= steps {
                    let mut next_run_end = run_end;
                    while next_run_end <= steps && contact[next_run_end][j] {
                        next_run_end += 1;
                    }
                    let mid = (run_end + next_run_end - 1) / 2;
                    nominal_xy(mid, j)
                } else {
                    nominal_xy(steps, j)
                };
                // swing spans [run_start, run_end] in continuous time
                let t0 = run_start as f64 * dt;
                let t1 = run_end as f64 * dt;
                let dur = (t1 - t0).max(dt);
                for kk in run_start..run_end.min(steps + 1) {
                    let tau = ((kk as f64 * dt) - t0) / dur;
                    let (q, qdot) = quintic(tau);
                    let (z, zdot) = swing_z(tau, script.step_height);
                    foot_pos[kk][j] =
                        prev_stone + (target - prev_stone) * q + Vector3::new(0.0, 0.0, z);
                    foot_vel[kk][j] =
                        (target - prev_stone) * (qdot / dur) + Vector3::new(0.0, 0.0, zdot / dur);
                }
                prev_stone = target;
            }
        }
    }

    // joint angles/rates from exact IK of the true contact point
    let mut joint_angles = Vec::with_capacity(steps + 1);
    let mut joint_rates = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let mut angles = Vec::with_capacity(n_f);
        let mut rates = Vec::with_capacity(n_f);
        for j in 0..n_f {
            let body_target =
                states[k].pose.rot.inverse_rotate(&(foot_pos[k][j] - states[k].pose.trans));
            let alpha = inverse_kinematics(robot, j, &body_target, &offsets_true.foot[j])?;
            let kin = leg_kinematics(robot, j, &alpha, &Vector3::zeros(), &offsets_true.foot[j]);
            let rhs = states[k]
                .pose
                .rot
                .inverse_rotate(&(foot_vel[k][j] - states[k].velocity))
                - body_rates[k].cross(&kin.fk);
            let rate = joint_rates_for(robot, j, &alpha, &offsets_true.foot[j], &rhs)?;
            angles.push(alpha);
            rates.push(rate);
        }
        joint_angles.push(angles);
        joint_rates.push(rates);
        states[k].foot_pos = foot_pos[k].clone();
    }

    Ok(MotionTruth {
        states,
        joint_angles,
        joint_rates,
        contact,
        body_rates,
        world_accels,
        dt,
    })
}

/// Draw sensors from the motion truth with the given noise scales; returns
/// the log plus the completed truth bundle (bias trajectories included).
///
/// Same seed, same output, byte for byte.
pub fn synthesize_sensors(
    motion: &MotionTruth,
    scales: &NoiseScales,
    offsets_true: &KinematicOffsets,
    seed: u64,
) -> (SensorLog, TruthBundle) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut normal = |std: f64| -> Vector3<f64> {
        // draw even when std == 0 to keep the stream layout fixed
        let v = Vector3::new(
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
        );
        v * std
    };

    let steps = motion.states.len() - 1;
    let dt = motion.dt;
    let n_f = motion.states[0].n_f();
    let mut states = motion.states.clone();

    // bias random walks
    let mut b_a = scales.accel_bias_init;
    let mut b_w = scales.gyro_bias_init;
    let walk_a = scales.accel_bias_walk * dt.sqrt();
    let walk_w = scales.gyro_bias_walk * dt.sqrt();
    for state in states.iter_mut() {
        state.accel_bias = b_a;
        state.gyro_bias = b_w;
        b_a += normal(walk_a);
        b_w += normal(walk_w);
    }

    let mut imu = Vec::with_capacity(steps + 1);
    let mut legs = Vec::with_capacity(steps + 1);
    let mut mocap = Vec::with_capacity(steps + 1);
    for (k, x) in states.iter().enumerate() {
        let specific_force = x.pose.rot.inverse_rotate(&(motion.world_accels[k] - GRAVITY));
        imu.push(ImuSample {
            accel: specific_force + x.accel_bias + normal(scales.accel_std),
            gyro: motion.body_rates[k] + x.gyro_bias + normal(scales.gyro_std),
            stamp: k as f64 * dt,
        });

        let mut angles = Vec::with_capacity(n_f);
        let mut rates = Vec::with_capacity(n_f);
        for j in 0..n_f {
            angles.push(motion.joint_angles[k][j] + normal(scales.joint_std));
            rates.push(motion.joint_rates[k][j] + normal(scales.joint_rate_std));
        }
        legs.push(LegSample {
            joint_angles: angles,
            joint_rates: rates,
            contact: motion.contact[k].clone(),
        });

        mocap.push(MocapSample {
            pose: Pose::new(x.pose.rot, x.pose.trans + x.pose.rot.rotate(&offsets_true.base)),
            velocity: x.velocity,
        });
    }

    let log = SensorLog { dt, imu, legs, mocap };
    let truth = TruthBundle {
        states,
        cov: implied_true_cov(scales, dt),
        offsets: offsets_true.clone(),
        seed,
    };
    (log, truth)
}

/// One-call generation: gait synthesis plus sensor synthesis.
pub fn generate_dataset(
    script: &GaitScript,
    robot: &RobotKinematics,
    scales: &NoiseScales,
    offsets_true: &KinematicOffsets,
    seed: u64,
) -> Result<(SensorLog, TruthBundle)> {
    let motion = generate_trajectory(script, robot, offsets_true)?;
    Ok(synthesize_sensors(&motion, scales, offsets_true, seed))
}
