// scratch: time the building blocks at T=400
use legcal_core::estimator::{solve_fie, SolverSettings};
use legcal_core::scenarios::{problem_from_log, recovery_scenario};
use legcal_core::sensitivity::sensitivity;
use legcal_core::theta::ThetaLayout;
use std::time::Instant;

fn main() {
    let (log, truth, _) = recovery_scenario(400, 69);
    let problem = problem_from_log(&log, &truth, SolverSettings::default());
    let layout = ThetaLayout::new(&problem.cov, 4);

    let t0 = Instant::now();
    let res = solve_fie(&problem, None).unwrap();
    println!("cold solve: {:?} ({} iters, conv={})", t0.elapsed(), res.iterations, res.converged);

    let t0 = Instant::now();
    let res2 = solve_fie(&problem, Some(&res.trajectory)).unwrap();
    println!("warm solve: {:?} ({} iters)", t0.elapsed(), res2.iterations);

    let t0 = Instant::now();
    let (_z, _) = sensitivity(&res.trajectory, &problem, &layout).unwrap();
    println!("sensitivity: {:?}", t0.elapsed());
}
