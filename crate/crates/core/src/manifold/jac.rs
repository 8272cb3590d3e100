//! Left Jacobians of SO(3) and SE(3) in the `(omega, rho)` twist ordering.
//!
//! These convert between additive perturbations of twist coordinates and
//! left group perturbations:
//! `exp(xi + J_l(xi)^-1 ... )` etc., specifically
//! `log(exp(skew(eps*delta)) * M) = log(M) + eps * J_l^-1(log M) * delta + O(eps^2)`.

use nalgebra::{Matrix3, Matrix6, Vector3};

use super::{se3_v_inv_matrix, se3_v_matrix, skew, twist_rot, twist_trans, Twist};

/// SO(3) left Jacobian; identical to the `V` matrix of the SE(3) exponential.
pub fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    se3_v_matrix(omega)
}

/// Inverse of the SO(3) left Jacobian.
pub fn so3_left_jacobian_inv(omega: &Vector3<f64>) -> Matrix3<f64> {
    se3_v_inv_matrix(omega)
}

/// adjoint of a twist on se(3): `[[skew(w), 0], [skew(r), skew(w)]]`.
fn se3_ad(xi: &Twist) -> Matrix6<f64> {
    let w = skew(&twist_rot(xi));
    let r = skew(&twist_trans(xi));
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&r);
    m
}

/// Coupling block `Q` of the SE(3) left Jacobian in the `(omega, rho)`
/// ordering: `Jl = [[Jl_so3, 0], [Q, Jl_so3]]`. Closed form with series
/// branches where the trigonometric ratios cancel catastrophically.
fn se3_q_matrix(omega: &Vector3<f64>, rho: &Vector3<f64>) -> Matrix3<f64> {
    let th2 = omega.norm_squared();
    let th = th2.sqrt();
    let (c1, q2, c3) = if th < 0.02 {
        let th4 = th2 * th2;
        (
            1.0 / 6.0 - th2 / 120.0 + th4 / 5040.0,
            1.0 / 24.0 - th2 / 720.0 + th4 / 40320.0,
            1.0 / 120.0 - th2 / 2520.0 + th4 / 120960.0,
        )
    } else {
        let (s, c) = th.sin_cos();
        let c1 = (th - s) / (th2 * th);
        let c2 = (1.0 - th2 / 2.0 - c) / (th2 * th2);
        let c3 = -0.5 * (c2 - 3.0 * (th - s - th2 * th / 6.0) / (th2 * th2 * th));
        (c1, -c2, c3)
    };
    let w = skew(omega);
    let r = skew(rho);
    let wr = w * r;
    let rw = r * w;
    let wrw = wr * w;
    0.5 * r + c1 * (wr + rw + w * rw) + q2 * (w * wr + rw * w - 3.0 * wrw) + c3 * (wrw * w + w * wrw)
}

/// SE(3) left Jacobian, closed form.
pub fn se3_left_jacobian(xi: &Twist) -> Matrix6<f64> {
    let omega = twist_rot(xi);
    let rho = twist_trans(xi);
    let a = so3_left_jacobian(&omega);
    let q = se3_q_matrix(&omega, &rho);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&a);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&q);
    m
}

/// Inverse of the SE(3) left Jacobian:
/// `[[A^-1, 0], [-A^-1 Q A^-1, A^-1]]` with `A = Jl_so3`.
pub fn se3_left_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    let omega = twist_rot(xi);
    let rho = twist_trans(xi);
    let a_inv = so3_left_jacobian_inv(&omega);
    let q = se3_q_matrix(&omega, &rho);
    let coupling = -a_inv * q * a_inv;
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&a_inv);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&a_inv);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&coupling);
    m
}

/// Reference evaluation of the SE(3) left Jacobian by the absolutely
/// convergent series `sum_n ad^n / (n+1)!`; independent route used to pin
/// the closed form down in tests.
pub fn se3_left_jacobian_series(xi: &Twist) -> Matrix6<f64> {
    let ad = se3_ad(xi);
    let mut term = Matrix6::identity();
    let mut sum = Matrix6::identity();
    for n in 1..60 {
        term = (term * ad) / (n as f64 + 1.0);
        sum += term;
        let t: f64 = term.norm();
        let s: f64 = sum.norm();
        if t < 1e-18 * s.max(1.0) {
            break;
        }
    }
    sum
}
