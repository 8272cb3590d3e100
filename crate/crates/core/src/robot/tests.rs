use super::*;
use crate::manifold::{se3_exp, twist_from_parts, Pose, Rotation};
use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion, Unit, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn rand_alpha(rng: &mut StdRng) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-0.6..0.6),
        rng.random_range(-0.3..1.2),
        rng.random_range(-2.2..-0.3),
    )
}

fn rand_vec3(rng: &mut StdRng, s: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

/// Independent product-of-elementary-transforms oracle built on nalgebra
/// isometries.
fn fk_transform_chain_oracle(
    robot: &RobotKinematics,
    leg: usize,
    alpha: &Vector3<f64>,
    offset: &Vector3<f64>,
) -> Vector3<f64> {
    let g = &robot.legs[leg];
    let links = g.link_offsets();
    let rot = |axis: Vector3<f64>, a: f64| {
        Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), a),
        )
    };
    let trans = |v: Vector3<f64>| Isometry3::from_parts(Translation3::from(v), UnitQuaternion::identity());
    let chain = trans(g.mount)
        * rot(g.axes[0], alpha[0])
        * trans(links[0])
        * rot(g.axes[1], alpha[1])
        * trans(links[1])
        * rot(g.axes[2], alpha[2]);
    chain.transform_point(&nalgebra::Point3::from(links[2] + offset)).coords
}

#[test]
fn fk_zero_angles_is_nominal_stance() {
    let robot = default_robot();
    for j in 0..robot.n_f() {
        let fk = forward_kinematics(&robot, j, &Vector3::zeros(), &Vector3::zeros());
        let expected = robot.legs[j].nominal_stance();
        assert!((fk - expected).norm() < 1e-12);
        // documented constant for the default geometry
        let side = robot.legs[j].side;
        let manual = robot.legs[j].mount + Vector3::new(0.0, side * 0.08, -0.426);
        assert!((fk - manual).norm() < 1e-12);
    }
}

#[test]
fn fk_zero_angles_with_calf_offset() {
    let robot = default_robot();
    let offset = Vector3::new(0.0, 0.0, -0.02);
    let fk = forward_kinematics(&robot, 0, &Vector3::zeros(), &offset);
    let nominal = robot.legs[0].nominal_stance();
    // at zero angles the calf frame is the body frame
    assert!((fk - (nominal + offset)).norm() < 1e-12);
}

#[test]
fn fk_matches_transform_chain_oracle() {
    let robot = default_robot();
    let mut rng = StdRng::seed_from_u64(31);
    for _ in 0..100 {
        let leg = rng.random_range(0..robot.n_f());
        let alpha = rand_alpha(&mut rng);
        let offset = rand_vec3(&mut rng, 0.05);
        let got = forward_kinematics(&robot, leg, &alpha, &offset);
        let oracle = fk_transform_chain_oracle(&robot, leg, &alpha, &offset);
        assert!((got - oracle).norm() < 1e-12);
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let robot = default_robot();
    let mut rng = StdRng::seed_from_u64(32);
    for _ in 0..30 {
        let leg = rng.random_range(0..robot.n_f());
        let alpha = rand_alpha(&mut rng);
        let offset = rand_vec3(&mut rng, 0.05);
        let jac = leg_jacobian(&robot, leg, &alpha, &offset);
        let eps = 1e-6;
        for c in 0..3 {
            let mut hi = alpha;
            let mut lo = alpha;
            hi[c] += eps;
            lo[c] -= eps;
            let fd = (forward_kinematics(&robot, leg, &hi, &offset)
                - forward_kinematics(&robot, leg, &lo, &offset))
                / (2.0 * eps);
            assert!((fd - jac.column(c)).norm() < 1e-6);
        }
    }
}

#[test]
fn jacobian_dot_matches_finite_differences() {
    let robot = default_robot();
    let mut rng = StdRng::seed_from_u64(33);
    for _ in 0..30 {
        let leg = rng.random_range(0..robot.n_f());
        let alpha = rand_alpha(&mut rng);
        let adot = rand_vec3(&mut rng, 2.0);
        let offset = rand_vec3(&mut rng, 0.05);
        let jd = leg_jacobian_dot(&robot, leg, &alpha, &adot, &offset);
        let delta = 1e-5;
        let fd = (leg_jacobian(&robot, leg, &(alpha + adot * delta), &offset)
            - leg_jacobian(&robot, leg, &(alpha - adot * delta), &offset))
            / (2.0 * delta);
        assert!((fd - jd).norm() < 1e-5, "err {:.3e}", (fd - jd).norm());
    }
}

#[test]
fn jacobian_dot_zero_rates() {
    let robot = default_robot();
    let jd = leg_jacobian_dot(&robot, 0, &Vector3::new(0.2, 0.5, -1.1), &Vector3::zeros(), &Vector3::zeros());
    assert_eq!(jd, Matrix3::zeros());
}

#[test]
fn offset_derivatives_match_finite_differences() {
    let robot = default_robot();
    let mut rng = StdRng::seed_from_u64(34);
    for _ in 0..20 {
        let leg = rng.random_range(0..robot.n_f());
        let alpha = rand_alpha(&mut rng);
        let adot = rand_vec3(&mut rng, 2.0);
        let offset = rand_vec3(&mut rng, 0.05);
        let kin = leg_kinematics(&robot, leg, &alpha, &adot, &offset);
        let eps = 1e-6;
        for c in 0..3 {
            let mut hi = offset;
            let mut lo = offset;
            hi[c] += eps;
            lo[c] -= eps;
            let kh = leg_kinematics(&robot, leg, &alpha, &adot, &hi);
            let kl = leg_kinematics(&robot, leg, &alpha, &adot, &lo);
            let fd_fk = (kh.fk - kl.fk) / (2.0 * eps);
            assert!((fd_fk - kin.calf_rot.column(c)).norm() < 1e-8);
            let fd_jac = (kh.jac - kl.jac) / (2.0 * eps);
            assert!((fd_jac - kin.d_jac_d_theta(c)).norm() < 1e-7);
            let fd_jd = (kh.jac_dot - kl.jac_dot) / (2.0 * eps);
            assert!((fd_jd - kin.d_jac_dot_d_theta(c)).norm() < 1e-6);
        }
    }
}

#[test]
fn ik_round_trips_fk() {
    let robot = default_robot();
    let mut rng = StdRng::seed_from_u64(35);
    for _ in 0..50 {
        let leg = rng.random_range(0..robot.n_f());
        let alpha = rand_alpha(&mut rng);
        let offset = rand_vec3(&mut rng, 0.03);
        let target = forward_kinematics(&robot, leg, &alpha, &offset);
        let sol = inverse_kinematics(&robot, leg, &target, &offset).unwrap();
        let back = forward_kinematics(&robot, leg, &sol, &offset);
        assert!((back - target).norm() < 1e-12);
    }
}

#[test]
fn ik_rejects_unreachable_target() {
    let robot = default_robot();
    let far = robot.legs[0].mount + Vector3::new(0.0, 0.0, -2.0);
    match inverse_kinematics(&robot, 0, &far, &Vector3::zeros()) {
        Err(crate::error::Error::IkOutOfRange { leg: 0, .. }) => {}
        other => panic!("expected IkOutOfRange, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn propagate_hovering_is_stationary() {
    let robot = default_robot();
    let mut x = crate::manifold::ManifoldState::new(robot.n_f());
    x.pose.trans = Vector3::new(0.0, 0.0, 0.35);
    let u = ImuSample { accel: Vector3::new(0.0, 0.0, 9.81), gyro: Vector3::zeros(), stamp: 0.0 };
    let next = process_propagate(&x, &u, 0.01);
    assert_eq!(next, x);
}

#[test]
fn propagate_free_fall() {
    let robot = default_robot();
    let x = crate::manifold::ManifoldState::new(robot.n_f());
    let u = ImuSample { accel: Vector3::zeros(), gyro: Vector3::zeros(), stamp: 0.0 };
    let next = process_propagate(&x, &u, 0.1);
    assert!((next.velocity - Vector3::new(0.0, 0.0, -0.981)).norm() < 1e-15);
    assert!((next.pose.trans - Vector3::new(0.0, 0.0, -0.04905)).norm() < 1e-15);
}

#[test]
fn propagate_converges_to_fine_grid_oracle() {
    // constant body rate and specific force: spin-and-accelerate profile
    let gyro = Vector3::new(0.1, 0.2, -0.15);
    let accel = Vector3::new(0.3, -0.2, 9.9);
    let u = |t: f64| ImuSample { accel, gyro, stamp: t };
    let run = |steps: usize| {
        let dt = 1.0 / steps as f64;
        let mut x = crate::manifold::ManifoldState::new(4);
        for k in 0..steps {
            x = process_propagate(&x, &u(k as f64 * dt), dt);
        }
        x.pose.trans
    };
    let coarse = run(100);
    let half = run(200);
    let fine = run(10_000);
    let err1 = (coarse - fine).norm();
    let err2 = (half - fine).norm();
    // first-order global error: halving dt halves the error
    let ratio = err1 / err2;
    assert!((1.5..2.5).contains(&ratio), "order ratio {ratio}");
    // Richardson-style tolerance from the oracle itself
    let tol = 3.0 * (coarse - half).norm() + 1e-12;
    assert!(err1 <= tol, "err {err1:.3e} tol {tol:.3e}");
}

/// Build a kinematically consistent standing state plus matching sensors.
fn standing_setup(
    robot: &RobotKinematics,
    offsets: &KinematicOffsets,
) -> (crate::manifold::ManifoldState, LegSample, ImuSample) {
    let mut x = crate::manifold::ManifoldState::new(robot.n_f());
    x.pose = Pose::new(
        Rotation::identity(),
        Vector3::new(0.1, -0.05, 0.33),
    );
    let mut angles = Vec::new();
    let mut rates = Vec::new();
    for j in 0..robot.n_f() {
        // feet on the ground under the nominal stance
        let stance = robot.legs[j].nominal_stance();
        let foot_world = Vector3::new(x.pose.trans.x + stance.x, x.pose.trans.y + stance.y, 0.0);
        x.foot_pos[j] = foot_world;
        let target_body = x.pose.rot.inverse_rotate(&(foot_world - x.pose.trans));
        let alpha = inverse_kinematics(robot, j, &target_body, &offsets.foot[j]).unwrap();
        angles.push(alpha);
        rates.push(Vector3::zeros());
    }
    let legs = LegSample { joint_angles: angles, joint_rates: rates, contact: vec![true; robot.n_f()] };
    let u = ImuSample { accel: Vector3::new(0.0, 0.0, 9.81), gyro: Vector3::zeros(), stamp: 0.0 };
    (x, legs, u)
}

#[test]
fn measurement_consistent_when_standing() {
    let robot = default_robot();
    let offsets = KinematicOffsets::zero(robot.n_f());
    let (x, legs, u) = standing_setup(&robot, &offsets);
    for pair in measurement_predict(&x, &legs, &u, &robot, &offsets) {
        assert!((pair.pos_meas - pair.pos_model).norm() < 1e-12);
        assert!((pair.vel_meas - pair.vel_model).norm() < 1e-12);
        assert!(pair.vel_active);
    }
}

#[test]
fn measurement_residual_sees_injected_offset() {
    let robot = default_robot();
    let true_offsets = KinematicOffsets {
        foot: vec![Vector3::new(0.01, 0.0, 0.0); robot.n_f()],
        base: Vector3::zeros(),
    };
    // data generated with the true geometry, model evaluated with zero offset
    let (x, legs, u) = standing_setup(&robot, &true_offsets);
    let model_offsets = KinematicOffsets::zero(robot.n_f());
    for pair in measurement_predict(&x, &legs, &u, &robot, &model_offsets) {
        let res = (pair.pos_meas - pair.pos_model).norm();
        assert!((res - 0.01).abs() < 1e-12, "residual {res}");
    }
}

#[test]
fn swing_leg_velocity_channel_inactive() {
    let robot = default_robot();
    let offsets = KinematicOffsets::zero(robot.n_f());
    let (x, mut legs, u) = standing_setup(&robot, &offsets);
    legs.contact[2] = false;
    let pairs = measurement_predict(&x, &legs, &u, &robot, &offsets);
    assert!(!pairs[2].vel_active);
    assert!(pairs[0].vel_active);
}

#[test]
fn g_mapping_first_order_error_halves() {
    let robot = default_robot();
    let offsets = Vector3::new(0.01, -0.005, 0.02);
    let alpha = Vector3::new(0.15, 0.55, -1.25);
    let adot = Vector3::new(0.8, -1.0, 0.6);
    let omega = Vector3::new(0.2, -0.1, 0.3);

    // body-frame nonlinear channels as functions of z = (alpha, adot, omega)
    let channels = |a: &Vector3<f64>, ad: &Vector3<f64>, w: &Vector3<f64>| {
        let kin = leg_kinematics(&robot, 0, a, ad, &offsets);
        (kin.fk, kin.jac * ad + w.cross(&kin.fk))
    };

    let kin = leg_kinematics(&robot, 0, &alpha, &adot, &offsets);
    let (gp, gv) = noise_mapping(&kin, &omega);
    let (y0_p, y0_v) = channels(&alpha, &adot, &omega);

    let mut rng = StdRng::seed_from_u64(36);
    let dz: nalgebra::SVector<f64, 9> =
        nalgebra::SVector::from_fn(|_, _| rng.random_range(-1.0f64..1.0));
    let mut errs = Vec::new();
    for scale in [1e-3, 5e-4] {
        let d = dz * scale;
        let (y_p, y_v) = channels(
            &(alpha + Vector3::new(d[0], d[1], d[2])),
            &(adot + Vector3::new(d[3], d[4], d[5])),
            &(omega + Vector3::new(d[6], d[7], d[8])),
        );
        let lin_p: Vector3<f64> = (gp * d).into();
        let lin_v: Vector3<f64> = (gv * d).into();
        let err = ((y_p - y0_p) - lin_p).norm() + ((y_v - y0_v) - lin_v).norm();
        errs.push(err);
    }
    // quadratic remainder: halving the perturbation quarters the error
    let ratio = errs[0] / errs[1];
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}, errs {:?}", errs);
}

#[test]
fn g_mapping_zero_rate_case() {
    let robot = default_robot();
    let alpha = Vector3::new(0.1, 0.4, -1.0);
    let kin = leg_kinematics(&robot, 0, &alpha, &Vector3::zeros(), &Vector3::zeros());
    let (gp, gv) = noise_mapping(&kin, &Vector3::zeros());
    // with zero rates and zero omega the velocity row's alpha block is Jdot = 0
    assert!(gv.fixed_view::<3, 3>(0, 0).norm() < 1e-15);
    assert_eq!(gv.fixed_view::<3, 3>(0, 3).clone_owned(), kin.jac);
    assert_eq!(gp.fixed_view::<3, 3>(0, 0).clone_owned(), kin.jac);
}

#[test]
fn left_pose_convention_in_state() {
    // sanity: boxplus applies exp on the left, so the translation moves with
    // the rotation lever arm
    let mut x = crate::manifold::ManifoldState::new(1);
    x.pose = se3_exp(&twist_from_parts(&Vector3::new(0.1, 0.2, 0.3), &Vector3::new(1.0, 2.0, 3.0)));
    let mut tau = nalgebra::DVector::zeros(x.tangent_dim());
    tau[0] = 1e-6;
    let moved = crate::manifold::boxplus(&x, &tau);
    let expected = crate::manifold::se3_exp(&twist_from_parts(
        &Vector3::new(1e-6, 0.0, 0.0),
        &Vector3::zeros(),
    ))
    .compose(&x.pose);
    assert!((moved.pose.trans - expected.trans).norm() < 1e-18);
}
