// scratch: compare the loss at candidate theta configurations
use legcal_core::calibrator::upper_loss;
use legcal_core::estimator::{solve_fie, SolverSettings};
use legcal_core::robot::{CovBlock, KinematicOffsets};
use legcal_core::scenarios::{problem_from_log, recovery_scenario};
use nalgebra::Vector3;

fn main() {
    let (log, truth, offsets) = recovery_scenario(400, 69);
    let eval = |label: &str, problem: &legcal_core::estimator::EstimationProblem| {
        let res = solve_fie(problem, None).unwrap();
        let loss = upper_loss(&res.trajectory, &log.mocap, &problem.offsets.base).unwrap();
        println!(
            "{label:<28} loss={loss:.6e} cost={:.3e} iters={} conv={}",
            res.cost, res.iterations, res.converged
        );
    };

    let settings = SolverSettings { max_iterations: 60, ..SolverSettings::default() };

    // exact generating parameters
    let p_true = problem_from_log(&log, &truth, settings.clone());
    eval("true theta", &p_true);

    // the basin the calibrator found (approximate values from the trace)
    let mut p_basin = problem_from_log(&log, &truth, settings.clone());
    p_basin.cov.q_vel = CovBlock::iso(9.57e-5);
    p_basin.cov.q_rot = CovBlock::iso(4.02e-7);
    p_basin.cov.q_foot = CovBlock::iso(8.88e-7);
    p_basin.cov.q_accel_bias = CovBlock::iso(3.79e-12);
    p_basin.cov.q_gyro_bias = CovBlock::iso(6.38e-10);
    p_basin.cov.r_joint = CovBlock::iso(1.25e-6);
    p_basin.cov.r_joint_rate = CovBlock::iso(1.00e-3);
    p_basin.offsets = KinematicOffsets {
        foot: vec![Vector3::new(0.0029, -0.0073, 0.0158); 4],
        base: Vector3::new(0.0500, 0.0204, 0.0299),
    };
    eval("calibrated basin", &p_basin);

    // basin covariances with TRUE offsets
    let mut p_mixed = p_basin.clone();
    p_mixed.offsets = offsets.clone();
    eval("basin covs + true offsets", &p_mixed);

    // true covariances with basin offsets
    let mut p_mixed2 = p_true.clone();
    p_mixed2.offsets = p_basin.offsets.clone();
    eval("true covs + basin offsets", &p_mixed2);
}
