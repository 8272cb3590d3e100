use super::*;
use nalgebra::{DVector, Matrix3, Matrix4, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;

fn rand_vec3(rng: &mut StdRng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn rand_state(rng: &mut StdRng, n_f: usize) -> ManifoldState {
    let mut x = ManifoldState::new(n_f);
    x.pose = se3_exp(&twist_from_parts(
        &rand_vec3(rng, 1.5),
        &rand_vec3(rng, 2.0),
    ));
    x.velocity = rand_vec3(rng, 1.0);
    for j in 0..n_f {
        x.foot_pos[j] = rand_vec3(rng, 1.0);
    }
    x.accel_bias = rand_vec3(rng, 0.1);
    x.gyro_bias = rand_vec3(rng, 0.1);
    x
}

/// Independent Rodrigues-formula oracle, written directly from sin/cos.
fn rodrigues_oracle(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    if theta == 0.0 {
        return Matrix3::identity();
    }
    let axis = omega / theta;
    let k = skew(&axis);
    Matrix3::identity() + theta.sin() * k + (1.0 - theta.cos()) * (k * k)
}

#[test]
fn so3_exp_zero_is_identity() {
    let r = so3_exp(&Vector3::zeros());
    assert_eq!(r.wxyz(), (1.0, 0.0, 0.0, 0.0));
}

#[test]
fn so3_exp_quarter_turn_quaternion() {
    let r = so3_exp(&Vector3::new(0.0, 0.0, PI / 2.0));
    let (w, x, y, z) = r.wxyz();
    assert!((w - (PI / 4.0).cos()).abs() < 1e-15);
    assert!(x.abs() < 1e-15 && y.abs() < 1e-15);
    assert!((z - (PI / 4.0).sin()).abs() < 1e-15);
}

#[test]
fn so3_exp_matches_rodrigues_oracle() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..50 {
        let dir = rand_vec3(&mut rng, 1.0);
        let omega = dir / dir.norm() * 2.9;
        let diff = so3_exp(&omega).to_matrix() - rodrigues_oracle(&omega);
        assert!(diff.norm() < 1e-12, "quaternion path vs Rodrigues oracle");
        let diff2 = so3_exp_matrix(&omega) - rodrigues_oracle(&omega);
        assert!(diff2.norm() < 1e-12, "matrix path vs Rodrigues oracle");
    }
}

#[test]
fn rotation_matrix_is_orthonormal() {
    let mut rng = StdRng::seed_from_u64(12);
    for _ in 0..100 {
        let r = so3_exp(&rand_vec3(&mut rng, 3.0)).to_matrix();
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-10);
        assert!((r.determinant() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn zeta_parallel_composition_adds() {
    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..20 {
        let dir = rand_vec3(&mut rng, 1.0);
        let a = dir * 0.7;
        let b = dir * -0.2;
        let lhs = zeta(&a).compose(&zeta(&b));
        let rhs = zeta(&(a + b));
        let (w1, x1, y1, z1) = lhs.wxyz();
        let (w2, x2, y2, z2) = rhs.wxyz();
        assert!((w1 - w2).abs() < 1e-12);
        assert!((x1 - x2).abs() < 1e-12 && (y1 - y2).abs() < 1e-12 && (z1 - z2).abs() < 1e-12);
    }
}

#[test]
fn zeta_quaternion_and_matrix_paths_commute() {
    let mut rng = StdRng::seed_from_u64(14);
    for _ in 0..100 {
        let omega = rand_vec3(&mut rng, 3.0);
        let diff = zeta(&omega).to_matrix() - so3_exp_matrix(&omega);
        assert!(diff.norm() < 1e-12);
    }
}

#[test]
fn se3_exp_zero_twist_is_identity() {
    let p = se3_exp(&Twist::zeros());
    assert_eq!(p.rot.wxyz(), (1.0, 0.0, 0.0, 0.0));
    assert_eq!(p.trans, Vector3::zeros());
}

#[test]
fn se3_exp_pure_translation() {
    let p = se3_exp(&twist_from_parts(
        &Vector3::zeros(),
        &Vector3::new(1.0, 2.0, 3.0),
    ));
    assert_eq!(p.trans, Vector3::new(1.0, 2.0, 3.0));
}

/// High-resolution RK4 integration of the screw motion `Tdot = hat(xi) T`.
fn screw_integration_oracle(xi: &Twist) -> Matrix4<f64> {
    let a = se3_hat(xi);
    let mut t = Matrix4::identity();
    let n = 20_000;
    let h = 1.0 / n as f64;
    for _ in 0..n {
        let k1 = a * t;
        let k2 = a * (t + 0.5 * h * k1);
        let k3 = a * (t + 0.5 * h * k2);
        let k4 = a * (t + h * k3);
        t += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    t
}

#[test]
fn se3_exp_matches_screw_integration() {
    let xi = twist_from_parts(&Vector3::new(0.0, 0.0, PI / 2.0), &Vector3::new(1.0, 0.0, 0.0));
    let oracle = screw_integration_oracle(&xi);
    let got = se3_exp(&xi).to_matrix();
    assert!((got - oracle).norm() < 1e-10, "diff {:.3e}", (got - oracle).norm());

    let mut rng = StdRng::seed_from_u64(15);
    for _ in 0..5 {
        let xi = twist_from_parts(&rand_vec3(&mut rng, 1.2), &rand_vec3(&mut rng, 1.0));
        let diff = se3_exp(&xi).to_matrix() - screw_integration_oracle(&xi);
        assert!(diff.norm() < 1e-10);
    }
}

#[test]
fn se3_log_exp_round_trip() {
    let mut rng = StdRng::seed_from_u64(16);
    for _ in 0..500 {
        let dir = rand_vec3(&mut rng, 1.0);
        let angle = rng.random_range(0.0..PI - 1e-3);
        let omega = dir / dir.norm() * angle;
        let xi = twist_from_parts(&omega, &rand_vec3(&mut rng, 2.0));
        let back = se3_log(&se3_exp(&xi)).unwrap();
        assert!((back - xi).amax() < 1e-9, "round trip err {:.3e}", (back - xi).amax());
    }
}

#[test]
fn se3_log_rejects_near_pi() {
    let xi = twist_from_parts(&Vector3::new(PI - 1e-9, 0.0, 0.0), &Vector3::zeros());
    let pose = se3_exp(&xi);
    match se3_log(&pose) {
        Err(crate::error::Error::AngleNearPi { .. }) => {}
        other => panic!("expected AngleNearPi, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn hat_vee_round_trip_exact() {
    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..100 {
        let xi = twist_from_parts(&rand_vec3(&mut rng, 5.0), &rand_vec3(&mut rng, 5.0));
        assert_eq!(se3_vee(&se3_hat(&xi)), xi);
    }
}

#[test]
fn boxplus_zero_is_identity() {
    let mut rng = StdRng::seed_from_u64(18);
    let x = rand_state(&mut rng, 4);
    let y = boxplus(&x, &DVector::zeros(x.tangent_dim()));
    assert!(boxminus(&y, &x).unwrap().amax() < 1e-15);
}

#[test]
fn boxminus_self_is_zero() {
    let mut rng = StdRng::seed_from_u64(19);
    let x = rand_state(&mut rng, 4);
    assert!(boxminus(&x, &x).unwrap().amax() < 1e-12);
}

#[test]
fn boxplus_boxminus_round_trip_1000_samples() {
    let mut rng = StdRng::seed_from_u64(20);
    for _ in 0..1000 {
        let x = rand_state(&mut rng, 4);
        let mut tau = DVector::zeros(x.tangent_dim());
        for i in 0..tau.len() {
            tau[i] = rng.random_range(-1.0..1.0);
        }
        let back = boxminus(&boxplus(&x, &tau), &x).unwrap();
        assert!((back - &tau).amax() < 1e-9);
    }
}

#[test]
fn left_perturbation_is_exact_on_pose() {
    // (exp(eps xi) T) [-] T recovers eps xi exactly: the group round trip
    // has no curvature term.
    let mut rng = StdRng::seed_from_u64(21);
    let x = rand_state(&mut rng, 4);
    let xi = twist_from_parts(&rand_vec3(&mut rng, 1.0), &rand_vec3(&mut rng, 1.0));
    for eps in [1e-3, 1e-4, 1e-5] {
        let mut tau = DVector::zeros(x.tangent_dim());
        for i in 0..6 {
            tau[i] = eps * xi[i];
        }
        let err = (boxminus(&boxplus(&x, &tau), &x).unwrap() - &tau).amax();
        assert!(err < 1e-12, "eps {eps}: err {err:.3e}");
    }
}

#[test]
fn composed_perturbations_second_order_decay() {
    // (T [+] eps(a+b)) [-] ((T [+] eps a) [+] eps b) shrinks as O(eps^2).
    let mut rng = StdRng::seed_from_u64(22);
    let x = rand_state(&mut rng, 4);
    let a: DVector<f64> = DVector::from_fn(x.tangent_dim(), |_, _| rng.random_range(-1.0..1.0));
    let b: DVector<f64> = DVector::from_fn(x.tangent_dim(), |_, _| rng.random_range(-1.0..1.0));
    let mut errs = Vec::new();
    for eps in [1e-3, 1e-4, 1e-5] {
        let lhs = boxplus(&x, &(eps * (&a + &b)));
        let rhs = boxplus(&boxplus(&x, &(eps * &a)), &(eps * &b));
        errs.push(boxminus(&lhs, &rhs).unwrap().amax());
    }
    // each decade in eps must shrink the error by ~100x; allow slack
    assert!(errs[1] < errs[0] * 0.05, "errs {:?}", errs);
    assert!(errs[2] < errs[1] * 0.05, "errs {:?}", errs);
}

#[test]
fn so3_left_jacobian_inv_matches_fd() {
    let mut rng = StdRng::seed_from_u64(23);
    for _ in 0..20 {
        let omega = rand_vec3(&mut rng, 1.4);
        let jinv = so3_left_jacobian_inv(&omega);
        let eps = 1e-7;
        for c in 0..3 {
            let mut delta = Vector3::zeros();
            delta[c] = 1.0;
            // log(exp(eps*delta) exp(omega)) ~ omega + eps Jl^-1(omega) delta
            let perturbed = so3_exp(&(delta * eps)).compose(&so3_exp(&omega));
            let fd = (so3_log(&perturbed).unwrap() - omega) / eps;
            assert!((fd - jinv.column(c)).norm() < 1e-6);
        }
    }
}

#[test]
fn se3_left_jacobian_closed_form_matches_series() {
    let mut rng = StdRng::seed_from_u64(25);
    for _ in 0..200 {
        let dir = rand_vec3(&mut rng, 1.0);
        let angle = rng.random_range(0.0..3.0);
        let omega = if dir.norm() > 1e-9 { dir / dir.norm() * angle } else { dir };
        let xi = twist_from_parts(&omega, &rand_vec3(&mut rng, 3.0));
        let closed = se3_left_jacobian(&xi);
        let series = se3_left_jacobian_series(&xi);
        assert!((closed - series).norm() < 1e-11 * series.norm().max(1.0));
    }
    // small-angle branch
    for scale in [1e-9, 1e-6, 1e-3, 1.9e-2, 2.1e-2] {
        let xi = twist_from_parts(&Vector3::new(scale, -scale, 0.5 * scale), &Vector3::new(0.4, -0.2, 0.1));
        let diff = (se3_left_jacobian(&xi) - se3_left_jacobian_series(&xi)).norm();
        assert!(diff < 1e-12, "scale {scale}: diff {diff:.3e}");
    }
}

#[test]
fn se3_left_jacobian_matches_fd_and_inverse_is_consistent() {
    let mut rng = StdRng::seed_from_u64(24);
    for _ in 0..20 {
        let xi = twist_from_parts(&rand_vec3(&mut rng, 1.2), &rand_vec3(&mut rng, 1.5));
        let jl = se3_left_jacobian(&xi);
        let jl_inv = se3_left_jacobian_inv(&xi);
        assert!((jl * jl_inv - nalgebra::Matrix6::identity()).norm() < 1e-10);
        let eps = 1e-7;
        for c in 0..6 {
            let mut nu = Twist::zeros();
            nu[c] = eps;
            // exp(xi + nu) = exp(Jl(xi) nu) exp(xi) to first order
            let lhs = se3_exp(&(xi + nu));
            let rhs = se3_exp(&xi);
            let fd = se3_log(&lhs.compose(&rhs.inverse())).unwrap() / eps;
            assert!(
                (fd - jl.column(c)).norm() < 1e-5,
                "col {c}: {:.3e}",
                (fd - jl.column(c)).norm()
            );
        }
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn prop_exp_log_round_trip(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
            tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0,
            scale in 0.0f64..0.95,
        ) {
            let dir = Vector3::new(ax, ay, az);
            let omega = if dir.norm() > 1e-6 {
                dir / dir.norm() * scale * (PI - 1e-3)
            } else {
                Vector3::zeros()
            };
            let xi = twist_from_parts(&omega, &Vector3::new(tx, ty, tz));
            let back = se3_log(&se3_exp(&xi)).unwrap();
            prop_assert!((back - xi).amax() < 1e-9);
        }
    }
}
