// scratch harness: watch Frank-Wolfe dynamics on the noise-free recovery
use legcal_core::calibrator::{calibrate, CalibrationSetup, FeasibleSet, FwConfig};
use legcal_core::datagen::{generate_dataset, GaitScript, NoiseScales};
use legcal_core::estimator::SolverSettings;
use legcal_core::robot::{default_robot, KinematicOffsets};
use legcal_core::scenarios::problem_from_log;
use legcal_core::theta::ThetaLayout;
use nalgebra::Vector3;

fn main() {
    let robot = default_robot();
    let mut script = GaitScript::trot(4.0, 0.01, 0.3);
    script.yaw_rate_amplitude = 0.5;
    script.yaw_rate_period = 1.5;
    let offsets = KinematicOffsets {
        foot: vec![Vector3::new(0.01, -0.005, 0.02); 4],
        base: Vector3::new(0.05, 0.02, 0.03),
    };
    let scales = NoiseScales {
        accel_std: 2e-3,
        gyro_std: 2e-4,
        joint_std: 1e-3,
        joint_rate_std: 2e-3,
        accel_bias_walk: 0.0,
        gyro_bias_walk: 0.0,
        accel_bias_init: Vector3::new(5e-3, -2e-3, 4e-3),
        gyro_bias_init: Vector3::new(1e-3, -5e-4, 8e-4),
    };
    let (log, truth) = generate_dataset(&script, &robot, &scales, &offsets, 69).unwrap();
    let mut problem = problem_from_log(&log, &truth, SolverSettings { max_iterations: 50, ..SolverSettings::default() });
    problem.offsets = KinematicOffsets::zero(4);
    // datasheet-style starting covariances
    problem.cov.q_pos = legcal_core::robot::CovBlock::iso(1e-6);
    problem.cov.q_vel = legcal_core::robot::CovBlock::iso(1e-4);
    problem.cov.q_rot = legcal_core::robot::CovBlock::iso(1e-5);
    problem.cov.q_foot = legcal_core::robot::CovBlock::iso(1e-6);
    problem.cov.q_accel_bias = legcal_core::robot::CovBlock::iso(1e-8);
    problem.cov.q_gyro_bias = legcal_core::robot::CovBlock::iso(1e-8);
    problem.cov.r_joint = legcal_core::robot::CovBlock::iso(1e-4);
    problem.cov.r_joint_rate = legcal_core::robot::CovBlock::iso(1e-2);
    let layout = ThetaLayout::new(&problem.cov, 4);
    let feasible = FeasibleSet::default_for(&layout, &problem.cov, robot.offset_bound);
    let setup = CalibrationSetup {
        problem,
        mocap: log.mocap.clone(),
        layout: layout.clone(),
        feasible,
        fw: FwConfig { t_max: 400, ..FwConfig::default() },
    };
    let out = calibrate(&setup).unwrap();
    for r in out.trace.iter().step_by(10) {
        println!(
            "t={:<3} loss={:.6e} |g|={:.3e} gap={:.3e} gamma={:.2e} delta={:.2e} foot0=({:+.4},{:+.4},{:+.4}) base=({:+.4},{:+.4},{:+.4})",
            r.iteration, r.loss, r.grad_norm, r.gap, r.gamma, r.delta_scale,
            r.theta[24], r.theta[25], r.theta[26],
            r.theta[36], r.theta[37], r.theta[38],
        );
        if r.iteration % 40 == 0 {
            println!("      cov: q_vel={:.2e} q_rot={:.2e} q_foot={:.2e} r_joint={:.2e} r_rate={:.2e} q_ba={:.2e} q_bw={:.2e}",
                r.theta[3], r.theta[6], r.theta[9], r.theta[18], r.theta[21], r.theta[12], r.theta[15]);
        }
    }
    println!("converged={} best loss={:.6e}", out.converged, out.loss);

    // path-dependence check: cold re-solve at the returned theta
    let (cov, offsets) = layout.unpack(&out.theta, &setup.problem.cov);
    let p = legcal_core::estimator::EstimationProblem { cov, offsets, ..setup.problem.clone() };
    let cold = legcal_core::estimator::solve_fie(&p, None).unwrap();
    let cold_loss = legcal_core::calibrator::upper_loss(&cold.trajectory, &log.mocap, &p.offsets.base).unwrap();
    println!("cold re-solve: loss={:.6e} (loop reported {:.6e}) conv={} iters={}",
        cold_loss, out.loss, cold.converged, cold.iterations);
    let warm = legcal_core::estimator::solve_fie(&p, Some(&out.estimate.trajectory)).unwrap();
    let warm_loss = legcal_core::calibrator::upper_loss(&warm.trajectory, &log.mocap, &p.offsets.base).unwrap();
    println!("warm re-solve: loss={:.6e} conv={} iters={}", warm_loss, warm.converged, warm.iterations);
}
