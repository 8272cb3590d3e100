//! Lie-group algebra for SO(3)/SE(3) and the product state manifold
//! `G = SE(3) x R^{n_eucl}`.
//!
//! Conventions used throughout the crate:
//! - Twists are ordered `(omega, rho)`: rotational part first, translational
//!   part second.
//! - Perturbations are LEFT group perturbations, `x [+] tau` applies
//!   `exp(tau_pose) * T` to the pose and adds component-wise on the
//!   Euclidean sub-states.
//! - Tangent vectors of a full state are ordered
//!   `(rot, trans, vel, foot_0..foot_{nf-1}, accel_bias, gyro_bias)`.
//! - Quaternions are canonicalized to `w >= 0` after every operation so
//!   state comparison is deterministic.

mod jac;

pub use jac::{
    se3_left_jacobian, se3_left_jacobian_inv, se3_left_jacobian_series, so3_left_jacobian,
    so3_left_jacobian_inv,
};

use nalgebra::{DVector, Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};

/// Below this angle (rad) trigonometric ratios switch to series expansions.
pub const SMALL_ANGLE: f64 = 1e-8;
/// The SO(3)/SE(3) log is rejected within this margin of the π branch cut.
pub const LOG_POLE_MARGIN: f64 = 1e-6;

/// Skew-symmetric (hat) map for 3-vectors: `skew(a) * b = a x b`.
#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Twist coordinates of se(3): `(omega, rho)`, rotation first.
pub type Twist = Vector6<f64>;

#[inline]
pub fn twist_from_parts(omega: &Vector3<f64>, rho: &Vector3<f64>) -> Twist {
    Vector6::new(omega.x, omega.y, omega.z, rho.x, rho.y, rho.z)
}

#[inline]
pub fn twist_rot(xi: &Twist) -> Vector3<f64> {
    Vector3::new(xi[0], xi[1], xi[2])
}

#[inline]
pub fn twist_trans(xi: &Twist) -> Vector3<f64> {
    Vector3::new(xi[3], xi[4], xi[5])
}

/// se(3) hat map: 4x4 matrix with `skew(omega)` upper-left and `rho` in the
/// last column.
pub fn se3_hat(xi: &Twist) -> Matrix4<f64> {
    let w = twist_rot(xi);
    let r = twist_trans(xi);
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&w));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&r);
    m
}

/// Inverse of [`se3_hat`]; exact index map, no checks on the skew part.
pub fn se3_vee(m: &Matrix4<f64>) -> Twist {
    Vector6::new(m[(2, 1)], m[(0, 2)], m[(1, 0)], m[(0, 3)], m[(1, 3)], m[(2, 3)])
}

/// A rotation stored as a unit quaternion `(w, x, y, z)`, renormalized and
/// canonicalized (`w >= 0`) after every operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Build from raw quaternion components; normalizes and canonicalizes.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        Rotation(UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))).canonicalized()
    }

    /// Build from components already known to be unit-norm (e.g. read back
    /// from a file this crate wrote); skips the renormalization so byte
    /// round trips stay exact.
    pub fn from_wxyz_trusted(w: f64, x: f64, y: f64, z: f64) -> Self {
        debug_assert!((w * w + x * x + y * y + z * z - 1.0).abs() < 1e-9);
        Rotation(UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z))).canonicalized()
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Rotation(UnitQuaternion::from_matrix(m)).canonicalized()
    }

    fn canonicalized(self) -> Self {
        let q = self.0.into_inner();
        if q.w < 0.0 {
            Rotation(UnitQuaternion::new_unchecked(-q))
        } else {
            Rotation(UnitQuaternion::new_unchecked(q))
        }
    }

    /// Quaternion components as `(w, x, y, z)`.
    pub fn wxyz(&self) -> (f64, f64, f64, f64) {
        let q = self.0.quaternion();
        (q.w, q.i, q.j, q.k)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    /// Quaternion product; composition of rotations (`self` applied after `rhs`).
    pub fn compose(&self, rhs: &Rotation) -> Rotation {
        Rotation(UnitQuaternion::new_unchecked(
            (self.0.into_inner() * rhs.0.into_inner()).normalize(),
        ))
        .canonicalized()
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(self.0.inverse()).canonicalized()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn inverse_rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.inverse() * v
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let (w, x, y, z) = self.wxyz();
        let vn = (x * x + y * y + z * z).sqrt();
        2.0 * vn.atan2(w.abs())
    }
}

/// Exponential map of so(3) as a unit quaternion (half-angle formula).
pub fn so3_exp(omega: &Vector3<f64>) -> Rotation {
    let theta = omega.norm();
    let (re, im) = if theta < SMALL_ANGLE {
        // second-order series of cos(t/2) and sin(t/2)/t
        let t2 = theta * theta;
        (1.0 - t2 / 8.0, 0.5 - t2 / 48.0)
    } else {
        ((0.5 * theta).cos(), (0.5 * theta).sin() / theta)
    };
    Rotation::from_wxyz(re, im * omega.x, im * omega.y, im * omega.z)
}

/// Exponential map of so(3) as a rotation matrix (Rodrigues formula).
///
/// Independent algebraic route from [`so3_exp`]; the two must agree.
/// The series branch is wide (`theta < 0.02`) because `(1 - cos)/theta^2`
/// cancels catastrophically near zero.
pub fn so3_exp_matrix(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < 0.02 {
        let theta4 = theta2 * theta2;
        (
            1.0 - theta2 / 6.0 + theta4 / 120.0,
            0.5 - theta2 / 24.0 + theta4 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(omega);
    Matrix3::identity() + a * k + b * (k * k)
}

/// Maps a small rotation vector to the corresponding unit quaternion.
///
/// Same map as [`so3_exp`]; kept as its own entry point because the process
/// model composes these increments by quaternion product.
#[inline]
pub fn zeta(omega_dt: &Vector3<f64>) -> Rotation {
    so3_exp(omega_dt)
}

/// Logarithm map of SO(3).
pub fn so3_log(r: &Rotation) -> Result<Vector3<f64>> {
    let (w, x, y, z) = r.wxyz();
    // canonical form guarantees w >= 0, so theta in [0, pi]
    let v = Vector3::new(x, y, z);
    let vn = v.norm();
    let theta = 2.0 * vn.atan2(w);
    if theta > std::f64::consts::PI - LOG_POLE_MARGIN {
        return Err(Error::AngleNearPi { angle: theta });
    }
    if vn < SMALL_ANGLE {
        // theta/sin(theta/2) ~ 2/w * (1 + vn^2/(6 w^2)) to second order
        Ok(v * (2.0 / w) * (1.0 + vn * vn / (6.0 * w * w)))
    } else {
        Ok(v * (theta / vn))
    }
}

/// SE(3) element: rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rot: Rotation,
    pub trans: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rot: Rotation::identity(), trans: Vector3::zeros() }
    }

    pub fn new(rot: Rotation, trans: Vector3<f64>) -> Self {
        Pose { rot, trans }
    }

    pub fn compose(&self, rhs: &Pose) -> Pose {
        Pose {
            rot: self.rot.compose(&rhs.rot),
            trans: self.rot.rotate(&rhs.trans) + self.trans,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rinv = self.rot.inverse();
        Pose { rot: rinv, trans: -rinv.rotate(&self.trans) }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot.rotate(p) + self.trans
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot.to_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.trans);
        m
    }
}

/// `V(omega)`: couples rotation and translation in the SE(3) exponential.
pub fn se3_v_matrix(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let (b, c) = if theta < 0.02 {
        let theta4 = theta2 * theta2;
        (
            0.5 - theta2 / 24.0 + theta4 / 720.0,
            1.0 / 6.0 - theta2 / 120.0 + theta4 / 5040.0,
        )
    } else {
        ((1.0 - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
    };
    let k = skew(omega);
    Matrix3::identity() + b * k + c * (k * k)
}

/// `V(omega)^-1`; closed form with a series branch near zero, where the
/// difference `1/t^2 - cot(t/2)/(2t)` cancels.
pub fn se3_v_inv_matrix(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let c = if theta < 0.02 {
        1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0
    } else {
        // written with cot for stability near pi
        let half = 0.5 * theta;
        1.0 / theta2 - (half.cos() / half.sin()) / (2.0 * theta)
    };
    let k = skew(omega);
    Matrix3::identity() - 0.5 * k + c * (k * k)
}

/// SE(3) exponential map: `R = exp(skew(omega))`, `t = V(omega) * rho`.
pub fn se3_exp(xi: &Twist) -> Pose {
    let omega = twist_rot(xi);
    let rho = twist_trans(xi);
    Pose { rot: so3_exp(&omega), trans: se3_v_matrix(&omega) * rho }
}

/// SE(3) logarithm map; fails within [`LOG_POLE_MARGIN`] of the π branch.
pub fn se3_log(t: &Pose) -> Result<Twist> {
    let omega = so3_log(&t.rot)?;
    let rho = se3_v_inv_matrix(&omega) * t.trans;
    Ok(twist_from_parts(&omega, &rho))
}

/// One time step of the robot state: base pose on SE(3) plus Euclidean
/// sub-states (velocity, per-leg foot positions, IMU biases).
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldState {
    pub pose: Pose,
    pub velocity: Vector3<f64>,
    /// World-frame contact-point positions, one per leg.
    pub foot_pos: Vec<Vector3<f64>>,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
}

impl ManifoldState {
    pub fn new(n_f: usize) -> Self {
        ManifoldState {
            pose: Pose::identity(),
            velocity: Vector3::zeros(),
            foot_pos: vec![Vector3::zeros(); n_f],
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
        }
    }

    pub fn n_f(&self) -> usize {
        self.foot_pos.len()
    }

    /// Tangent dimension `6 + n_eucl` with `n_eucl = 3 + 3 n_f + 6`.
    pub fn tangent_dim(&self) -> usize {
        tangent_dim(self.n_f())
    }
}

pub fn tangent_dim(n_f: usize) -> usize {
    15 + 3 * n_f
}

/// Tangent-vector slice offsets for a state with `n_f` legs.
pub mod slice {
    pub const ROT: usize = 0;
    pub const TRANS: usize = 3;
    pub const VEL: usize = 6;
    pub const FOOT: usize = 9;
    pub fn foot(j: usize) -> usize {
        FOOT + 3 * j
    }
    pub fn accel_bias(n_f: usize) -> usize {
        FOOT + 3 * n_f
    }
    pub fn gyro_bias(n_f: usize) -> usize {
        FOOT + 3 * n_f + 3
    }
}

fn vec3_at(tau: &DVector<f64>, off: usize) -> Vector3<f64> {
    Vector3::new(tau[off], tau[off + 1], tau[off + 2])
}

fn set_vec3(out: &mut DVector<f64>, off: usize, v: &Vector3<f64>) {
    out[off] = v.x;
    out[off + 1] = v.y;
    out[off + 2] = v.z;
}

/// Manifold retraction: left pose perturbation, component-wise addition on
/// the Euclidean sub-states.
pub fn boxplus(x: &ManifoldState, tau: &DVector<f64>) -> ManifoldState {
    assert_eq!(tau.len(), x.tangent_dim(), "tangent dimension mismatch");
    let n_f = x.n_f();
    let xi = twist_from_parts(&vec3_at(tau, slice::ROT), &vec3_at(tau, slice::TRANS));
    let mut out = x.clone();
    out.pose = se3_exp(&xi).compose(&x.pose);
    out.velocity += vec3_at(tau, slice::VEL);
    for j in 0..n_f {
        out.foot_pos[j] += vec3_at(tau, slice::foot(j));
    }
    out.accel_bias += vec3_at(tau, slice::accel_bias(n_f));
    out.gyro_bias += vec3_at(tau, slice::gyro_bias(n_f));
    out
}

/// Local difference: `log(T1 * T2^-1)` on the pose, subtraction elsewhere.
pub fn boxminus(x1: &ManifoldState, x2: &ManifoldState) -> Result<DVector<f64>> {
    assert_eq!(x1.n_f(), x2.n_f(), "leg count mismatch");
    let n_f = x1.n_f();
    let xi = se3_log(&x1.pose.compose(&x2.pose.inverse()))?;
    let mut out = DVector::zeros(x1.tangent_dim());
    set_vec3(&mut out, slice::ROT, &twist_rot(&xi));
    set_vec3(&mut out, slice::TRANS, &twist_trans(&xi));
    set_vec3(&mut out, slice::VEL, &(x1.velocity - x2.velocity));
    for j in 0..n_f {
        set_vec3(&mut out, slice::foot(j), &(x1.foot_pos[j] - x2.foot_pos[j]));
    }
    set_vec3(&mut out, slice::accel_bias(n_f), &(x1.accel_bias - x2.accel_bias));
    set_vec3(&mut out, slice::gyro_bias(n_f), &(x1.gyro_bias - x2.gyro_bias));
    Ok(out)
}

#[cfg(test)]
mod tests;
