//! Subcommand implementations.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;

use legcal_core::calibrator::{self, CalibrationSetup};
use legcal_core::datagen;
use legcal_core::error::Error;
use legcal_core::estimator::solve_fie;
use legcal_core::io::{self, MetricsReport, RunConfigFile};
use legcal_core::theta::ThetaLayout;
use legcal_core::Result;

use crate::util;
use crate::CommonArgs;

fn load_config(common: &CommonArgs) -> Result<RunConfigFile> {
    match &common.config {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("config file '{}' does not exist", p.display())));
            }
            io::load_run_config(p)
        }
        None => Ok(RunConfigFile::default()),
    }
}

pub fn generate(common: &CommonArgs, seed: u64) -> Result<ExitCode> {
    let level = util::log_level(common.verbose);
    let cfg = load_config(common)?;
    let robot = util::load_robot_or_default(common.robot.as_deref())?;
    let script = cfg.script.to_script()?;
    let scales = cfg.noise.to_scales();
    let inject = cfg.inject.to_offsets(robot.n_f())?;

    std::fs::create_dir_all(&common.out)?;
    let t0 = Instant::now();
    let (log, truth) = datagen::generate_dataset(&script, &robot, &scales, &inject, seed)?;
    let log_path = common.out.join("log.txt");
    io::export_log(&log_path, &log, Some(&truth), io::robot_hash(&robot))?;
    let robot_path = common.out.join("robot.toml");
    io::save_robot(&robot_path, &robot)?;

    util::info(level, &format!("generated {} steps in {:?}", log.len() - 1, t0.elapsed()));
    println!("{}", log_path.display());
    println!("{}", robot_path.display());
    Ok(ExitCode::SUCCESS)
}

fn load_inputs(
    common: &CommonArgs,
    data: &Path,
) -> Result<(RunConfigFile, legcal_core::robot::RobotKinematics, datagen::SensorLog, Option<datagen::TruthBundle>)>
{
    let cfg = load_config(common)?;
    let robot = util::load_robot_or_default(common.robot.as_deref())?;
    if !data.exists() {
        return Err(Error::Config(format!("data file '{}' does not exist", data.display())));
    }
    let (log, truth) = io::import_log(data)?;
    Ok((cfg, robot, log, truth))
}

pub fn estimate(
    common: &CommonArgs,
    data: &Path,
    theta_path: Option<&Path>,
    label: &str,
) -> Result<ExitCode> {
    let level = util::log_level(common.verbose);
    let (cfg, robot, log, truth) = load_inputs(common, data)?;
    let template_cov = cfg.init.to_cov(&cfg.prior);
    let layout = ThetaLayout::new(&template_cov, robot.n_f());
    let theta = match theta_path {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("theta file '{}' does not exist", p.display())));
            }
            io::load_theta(p, &layout)?
        }
        None => layout.pack(&template_cov, &cfg.init.to_offsets(robot.n_f())?),
    };
    let (cov, offsets) = layout.unpack(&theta, &template_cov);

    let t0 = Instant::now();
    let problem =
        util::problem_for(&robot, &log, cov, offsets, cfg.solver.to_settings(), truth.as_ref());
    let res = solve_fie(&problem, None)?;
    let (rmse_v, rmse_euler) = util::rmse_vs_mocap(&res.trajectory, &log.mocap)?;

    std::fs::create_dir_all(&common.out)?;
    io::write_trajectory(&common.out.join("trajectory.txt"), &res.trajectory)?;
    let report = MetricsReport {
        rmse_v,
        rmse_euler,
        solver_iterations: res.iterations,
        solver_converged: res.converged,
        final_cost: res.cost,
        theta_error: truth.as_ref().map(|t| util::theta_error(&layout, &theta, t)),
        wall_clock_s: t0.elapsed().as_secs_f64(),
    };
    io::write_metrics(&common.out.join(format!("{label}_metrics.txt")), &report)?;

    util::info(
        level,
        &format!(
            "{label}: rmse_v {rmse_v:.6} m/s, rmse_euler {rmse_euler:.6} rad, converged {}",
            res.converged
        ),
    );
    println!("rmse_v {rmse_v:.17e}");
    println!("rmse_euler {rmse_euler:.17e}");
    if !res.converged {
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn calibrate(common: &CommonArgs, data: &Path, theta_path: Option<&Path>) -> Result<ExitCode> {
    let level = util::log_level(common.verbose);
    let (cfg, robot, log, truth) = load_inputs(common, data)?;
    let template_cov = cfg.init.to_cov(&cfg.prior);
    let layout = ThetaLayout::new(&template_cov, robot.n_f());
    let theta0 = match theta_path {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("theta file '{}' does not exist", p.display())));
            }
            io::load_theta(p, &layout)?
        }
        None => layout.pack(&template_cov, &cfg.init.to_offsets(robot.n_f())?),
    };
    let (cov, offsets) = layout.unpack(&theta0, &template_cov);
    let feasible = cfg.bounds.to_feasible(&layout, &cov, &robot);

    let t0 = Instant::now();
    let problem =
        util::problem_for(&robot, &log, cov, offsets, cfg.solver.to_settings(), truth.as_ref());
    let setup = CalibrationSetup {
        problem,
        mocap: log.mocap.clone(),
        layout: layout.clone(),
        feasible,
        fw: cfg.frank_wolfe.to_config(),
    };
    let out = calibrator::calibrate(&setup)?;

    let (rmse_v, rmse_euler) = util::rmse_vs_mocap(&out.estimate.trajectory, &log.mocap)?;
    std::fs::create_dir_all(&common.out)?;
    io::save_theta(&common.out.join("theta_star.txt"), &layout, &out.theta)?;
    io::write_trace(&common.out.join("trace.txt"), &layout, &out.trace)?;
    io::write_trajectory(&common.out.join("trajectory.txt"), &out.estimate.trajectory)?;
    let report = MetricsReport {
        rmse_v,
        rmse_euler,
        solver_iterations: out.trace.len(),
        solver_converged: out.converged,
        final_cost: out.loss,
        theta_error: truth.as_ref().map(|t| util::theta_error(&layout, &out.theta, t)),
        wall_clock_s: t0.elapsed().as_secs_f64(),
    };
    io::write_metrics(&common.out.join("calibrate_metrics.txt"), &report)?;

    util::info(
        level,
        &format!(
            "calibrate: {} iterations, loss {:.6e}, converged {}, {:?}",
            out.trace.len(),
            out.loss,
            out.converged,
            t0.elapsed()
        ),
    );
    println!("loss {:.17e}", out.loss);
    println!("iterations {}", out.trace.len());
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(
    common: &CommonArgs,
    data: &Path,
    theta_path: Option<&Path>,
    corrupt: bool,
) -> Result<ExitCode> {
    let level = util::log_level(common.verbose);
    let (cfg, robot, log, truth) = load_inputs(common, data)?;
    let template_cov = cfg.init.to_cov(&cfg.prior);
    let layout = ThetaLayout::new(&template_cov, robot.n_f());
    let theta0 = match theta_path {
        Some(p) => io::load_theta(p, &layout)?,
        None => layout.pack(&template_cov, &cfg.init.to_offsets(robot.n_f())?),
    };
    let (cov, offsets) = layout.unpack(&theta0, &template_cov);

    // probing needs gradient-driven convergence
    let mut settings = cfg.solver.to_settings();
    settings.grad_tol = 1e-9;
    settings.rel_cost_tol = 0.0;
    settings.step_tol = 1e-16;
    settings.max_iterations = settings.max_iterations.max(200);

    let problem = util::problem_for(&robot, &log, cov, offsets, settings, truth.as_ref());
    let base = solve_fie(&problem, None)?;
    let (_, mut grad) =
        calibrator::loss_gradient(&base.trajectory, &problem, &log.mocap, &layout)?;
    if corrupt {
        // negative control: break an offset component (checked in raw units)
        let idx = layout
            .entries()
            .iter()
            .position(|e| matches!(e.kind, legcal_core::theta::ThetaKind::Foot { .. }))
            .unwrap_or(0);
        grad[idx] = grad[idx] * 1.25 + 1.0;
    }

    let theta = layout.pack(&problem.cov, &problem.offsets);
    let eval_loss = |t: &DVector<f64>| -> Result<f64> {
        let (cov, offsets) = layout.unpack(t, &problem.cov);
        let p = legcal_core::estimator::EstimationProblem {
            cov,
            offsets,
            ..problem.clone()
        };
        let r = solve_fie(&p, Some(&base.trajectory))?;
        calibrator::upper_loss(&r.trajectory, &log.mocap, &p.offsets.base)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let fd: Vec<Result<f64>> = pool.install(|| {
        use rayon::prelude::*;
        (0..layout.len())
            .into_par_iter()
            .map(|i| {
                let eps = legcal_core::scenarios::fd_step(&layout, &theta, i);
                let mut tp = theta.clone();
                tp[i] += eps;
                let mut tm = theta.clone();
                tm[i] -= eps;
                Ok((eval_loss(&tp)? - eval_loss(&tm)?) / (2.0 * eps))
            })
            .collect()
    });

    let mut worst: f64 = 0.0;
    println!("component analytic fd rel_err status");
    for (i, fd_i) in fd.into_iter().enumerate() {
        let fd_i = fd_i?;
        let s = legcal_core::scenarios::column_scale(&layout, &theta, i);
        let rel = ((grad[i] - fd_i) * s).abs() / (1.0 + (fd_i * s).abs());
        worst = worst.max(rel);
        println!(
            "{} {:.17e} {:.17e} {:.3e} {}",
            layout.entries()[i].name,
            grad[i],
            fd_i,
            rel,
            if rel <= 1e-3 { "PASS" } else { "FAIL" }
        );
    }
    util::info(level, &format!("gradcheck worst relative error {worst:.3e}"));
    if worst > 1e-3 {
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}
