//! Serial-chain leg kinematics: forward kinematics of the contact point,
//! analytic Jacobian, its time derivative, and derivatives with respect to
//! the calf-frame contact offset.
//!
//! Default topology per leg: hip-roll about x at the mount, a lateral hip
//! link, hip-pitch about y, the thigh, knee-pitch about y, the calf. The
//! contact point is the foot tip plus a constant offset expressed in the
//! calf frame.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::manifold::so3_exp_matrix;

use super::RobotKinematics;

/// Per-leg geometry: mount point, joint axes in their parent frames, and
/// link offset vectors applied after each joint rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct LegGeometry {
    /// Hip-roll joint position in the body frame.
    pub mount: Vector3<f64>,
    /// +1 for left legs, -1 for right legs.
    pub side: f64,
    pub l_hip: f64,
    pub l_thigh: f64,
    pub l_calf: f64,
    /// Joint axes in the frame of the preceding link.
    pub axes: [Vector3<f64>; 3],
}

impl LegGeometry {
    /// Link offset vectors: hip link after joint 1, thigh after joint 2,
    /// calf after joint 3.
    pub fn link_offsets(&self) -> [Vector3<f64>; 3] {
        [
            Vector3::new(0.0, self.side * self.l_hip, 0.0),
            Vector3::new(0.0, 0.0, -self.l_thigh),
            Vector3::new(0.0, 0.0, -self.l_calf),
        ]
    }

    /// Contact point at zero joint angles and zero offset.
    pub fn nominal_stance(&self) -> Vector3<f64> {
        let t = self.link_offsets();
        self.mount + t[0] + t[1] + t[2]
    }
}

/// Full kinematic evaluation of one leg at a joint configuration.
#[derive(Debug, Clone)]
pub struct LegKin {
    /// Contact point in the body frame (foot tip plus rotated offset).
    pub fk: Vector3<f64>,
    /// `d fk / d alpha`, one column per joint.
    pub jac: Matrix3<f64>,
    /// Time derivative of `jac` along the supplied joint rates.
    pub jac_dot: Matrix3<f64>,
    /// Calf frame orientation `R_BC` in the body frame.
    pub calf_rot: Matrix3<f64>,
    /// Joint axes expressed in the body frame.
    pub axes: [Vector3<f64>; 3],
    /// Joint origins in the body frame.
    pub origins: [Vector3<f64>; 3],
    axes_dot: [Vector3<f64>; 3],
    /// Angular velocity of the calf frame relative to the body.
    pub omega_leg: Vector3<f64>,
}

impl LegKin {
    /// `d jac / d theta_c`: how Jacobian columns move with the offset
    /// component `c` of the calf-frame contact offset.
    pub fn d_jac_d_theta(&self, c: usize) -> Matrix3<f64> {
        let dp = self.calf_rot.column(c).into_owned();
        let mut m = Matrix3::zeros();
        for i in 0..3 {
            m.set_column(i, &self.axes[i].cross(&dp));
        }
        m
    }

    /// `d jac_dot / d theta_c`.
    pub fn d_jac_dot_d_theta(&self, c: usize) -> Matrix3<f64> {
        let dp = self.calf_rot.column(c).into_owned();
        let dp_dot = self.omega_leg.cross(&dp);
        let mut m = Matrix3::zeros();
        for i in 0..3 {
            m.set_column(i, &(self.axes_dot[i].cross(&dp) + self.axes[i].cross(&dp_dot)));
        }
        m
    }
}

/// Evaluate position-level kinematics only.
pub fn forward_kinematics(
    robot: &RobotKinematics,
    leg: usize,
    alpha: &Vector3<f64>,
    offset: &Vector3<f64>,
) -> Vector3<f64> {
    let kin = leg_kinematics(robot, leg, alpha, &Vector3::zeros(), offset);
    kin.fk
}

/// Analytic contact-point Jacobian `d fk / d alpha`.
pub fn leg_jacobian(
    robot: &RobotKinematics,
    leg: usize,
    alpha: &Vector3<f64>,
    offset: &Vector3<f64>,
) -> Matrix3<f64> {
    leg_kinematics(robot, leg, alpha, &Vector3::zeros(), offset).jac
}

/// Time derivative of the Jacobian along `alpha_dot`.
pub fn leg_jacobian_dot(
    robot: &RobotKinematics,
    leg: usize,
    alpha: &Vector3<f64>,
    alpha_dot: &Vector3<f64>,
    offset: &Vector3<f64>,
) -> Matrix3<f64> {
    leg_kinematics(robot, leg, alpha, alpha_dot, offset).jac_dot
}

/// Evaluate the full chain: positions, axes, Jacobian and time derivatives.
pub fn leg_kinematics(
    robot: &RobotKinematics,
    leg: usize,
    alpha: &Vector3<f64>,
    alpha_dot: &Vector3<f64>,
    offset: &Vector3<f64>,
) -> LegKin {
    let geom = &robot.legs[leg];
    let links = geom.link_offsets();

    // walk the chain: R_i = R_{i-1} exp(alpha_i * axis_i)
    let mut rot = Matrix3::identity();
    let mut origin = geom.mount;
    let mut axes = [Vector3::zeros(); 3];
    let mut origins = [Vector3::zeros(); 3];
    for i in 0..3 {
        axes[i] = rot * geom.axes[i];
        origins[i] = origin;
        rot *= so3_exp_matrix(&(geom.axes[i] * alpha[i]));
        origin += rot * links[i];
    }
    let fk = origin + rot * offset;

    let mut jac = Matrix3::zeros();
    for i in 0..3 {
        jac.set_column(i, &axes[i].cross(&(fk - origins[i])));
    }

    // angular velocity of each link frame: omega_i = sum_{k<=i} adot_k a_k
    let mut omega = [Vector3::zeros(); 3];
    let mut acc = Vector3::zeros();
    for i in 0..3 {
        acc += axes[i] * alpha_dot[i];
        omega[i] = acc;
    }
    // axis i rides on link i-1
    let axes_dot = [
        Vector3::zeros(),
        omega[0].cross(&axes[1]),
        omega[1].cross(&axes[2]),
    ];
    // joint origins: o_1 fixed, o_{i+1} = o_i + R_i t_i
    let mut origins_dot = [Vector3::zeros(); 3];
    for i in 1..3 {
        origins_dot[i] = origins_dot[i - 1] + omega[i - 1].cross(&(origins[i] - origins[i - 1]));
    }
    let fk_dot = jac * alpha_dot;

    let mut jac_dot = Matrix3::zeros();
    for i in 0..3 {
        jac_dot.set_column(
            i,
            &(axes_dot[i].cross(&(fk - origins[i])) + axes[i].cross(&(fk_dot - origins_dot[i]))),
        );
    }

    LegKin {
        fk,
        jac,
        jac_dot,
        calf_rot: rot,
        axes,
        origins,
        axes_dot,
        omega_leg: omega[2],
    }
}

/// Inverse kinematics of the contact point in the body frame.
///
/// Closed form for the default hip-roll/hip-pitch/knee topology, followed by
/// Newton refinement that also accounts for the calf-frame offset. Converges
/// to machine precision in a handful of iterations.
pub fn inverse_kinematics(
    robot: &RobotKinematics,
    leg: usize,
    target: &Vector3<f64>,
    offset: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let geom = &robot.legs[leg];
    let d = target - geom.mount;
    let l_hip = geom.side * geom.l_hip;
    let (lt, lc) = (geom.l_thigh, geom.l_calf);

    // closed-form seed for the nominal chain; clamped when the target sits
    // marginally outside nominal reach (the offset can extend it)
    let r2 = d.y * d.y + d.z * d.z;
    let wz = if r2 > l_hip * l_hip { -(r2 - l_hip * l_hip).sqrt() } else { -1e-3 };
    let a1 = d.z.atan2(d.y) - wz.atan2(l_hip);
    let wx = d.x;

    let cos_knee = (wx * wx + wz * wz - lt * lt - lc * lc) / (2.0 * lt * lc);
    if !(-3.0..=3.0).contains(&cos_knee) {
        return Err(Error::IkOutOfRange {
            leg,
            detail: format!(
                "planar reach {:.4} far outside [{:.4}, {:.4}]",
                (wx * wx + wz * wz).sqrt(),
                (lt - lc).abs(),
                lt + lc
            ),
        });
    }
    let a3 = -cos_knee.clamp(-1.0, 1.0).acos();
    let (s3, c3) = a3.sin_cos();
    let a2 = (-wx).atan2(-wz) - (lc * s3).atan2(lt + lc * c3);

    // damped Newton decides reachability; folds in the contact offset
    let mut alpha = Vector3::new(a1, a2, a3);
    let mut best = (f64::INFINITY, alpha);
    for _ in 0..80 {
        let kin = leg_kinematics(robot, leg, &alpha, &Vector3::zeros(), offset);
        let err = kin.fk - target;
        let norm = err.norm();
        if norm < best.0 {
            best = (norm, alpha);
        }
        if norm < 1e-14 {
            return Ok(alpha);
        }
        let mut step = kin.jac.lu().solve(&err).unwrap_or_else(Vector3::zeros);
        if step.norm() == 0.0 {
            break;
        }
        let cap = 0.7;
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        alpha -= step;
    }
    if best.0 < 1e-10 {
        Ok(best.1)
    } else {
        Err(Error::IkOutOfRange {
            leg,
            detail: format!("refinement stalled at residual {:.3e}", best.0),
        })
    }
}

/// Joint rates realizing a desired contact-point velocity in the body frame.
pub fn joint_rates_for(
    robot: &RobotKinematics,
    leg: usize,
    alpha: &Vector3<f64>,
    offset: &Vector3<f64>,
    fk_vel_body: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let kin = leg_kinematics(robot, leg, alpha, &Vector3::zeros(), offset);
    kin.jac.lu().solve(fk_vel_body).ok_or_else(|| Error::IkOutOfRange {
        leg,
        detail: "singular Jacobian in rate solve".to_string(),
    })
}

/// Rate of change of the rotated offset: `d(R_BC theta)/dalpha_i = a_i x (R_BC theta)`.
pub fn d_rotated_offset_d_alpha(kin: &LegKin, offset: &Vector3<f64>) -> Matrix3<f64> {
    let v = kin.calf_rot * offset;
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        m.set_column(i, &kin.axes[i].cross(&v));
    }
    m
}
