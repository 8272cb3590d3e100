//! Full-information MAP estimation over the state-trajectory manifold,
//! solved as sparse nonlinear least squares with damped Gauss-Newton.
//!
//! The equality-constrained MAP program is reduced by substituting the
//! process and measurement noises into the objective; the KKT system then
//! collapses to the stationarity condition `grad J = 0` on the trajectory
//! tangent, and the Gauss-Newton normal matrix inherits the problem's
//! block-tridiagonal coupling.

pub(crate) mod assembly;

pub use assembly::{ResidualBlock, ResidualStack};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::manifold::{boxplus, ManifoldState};
use crate::robot::{process_propagate, CovarianceSpec, ImuSample, KinematicOffsets, LegSample, RobotKinematics};
use crate::sensitivity::block_tridiag::BlockTridiagChol;

/// Gauss-Newton / Levenberg solver knobs.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Stationarity tolerance on `|grad|_inf`.
    pub grad_tol: f64,
    /// Relative cost-change tolerance.
    pub rel_cost_tol: f64,
    /// Step-size floor: a Gauss-Newton step below this is numerical noise.
    pub step_tol: f64,
    pub max_iterations: usize,
    pub lambda_init: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            grad_tol: 1e-8,
            rel_cost_tol: 1e-12,
            step_tol: 1e-14,
            max_iterations: 100,
            lambda_init: 1e-8,
            lambda_min: 1e-12,
            lambda_max: 1e2,
        }
    }
}

/// One smoothing problem: horizon, sensor log, prior, and the parameters
/// the upper level is calibrating.
#[derive(Debug, Clone)]
pub struct EstimationProblem {
    pub robot: RobotKinematics,
    pub dt: f64,
    /// `T+1` IMU samples; sample `k` drives the step `k -> k+1`.
    pub imu: Vec<ImuSample>,
    /// `T+1` encoder/contact samples.
    pub legs: Vec<LegSample>,
    pub prior_mean: ManifoldState,
    pub cov: CovarianceSpec,
    pub offsets: KinematicOffsets,
    pub settings: SolverSettings,
}

impl EstimationProblem {
    pub fn horizon(&self) -> usize {
        self.imu.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.imu.len() != self.legs.len() || self.imu.is_empty() {
            return Err(Error::LengthMismatch {
                left: self.imu.len(),
                right: self.legs.len(),
                context: "IMU vs leg samples".to_string(),
            });
        }
        if self.prior_mean.n_f() != self.robot.n_f() {
            return Err(Error::LengthMismatch {
                left: self.prior_mean.n_f(),
                right: self.robot.n_f(),
                context: "prior legs vs robot legs".to_string(),
            });
        }
        self.cov.validate()?;
        Ok(())
    }
}

/// Per-iteration solver diagnostics.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub lambda: f64,
    pub accepted: bool,
}

/// Smoother output: trajectory, final cost, stationarity, diagnostics.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub trajectory: Vec<ManifoldState>,
    pub cost: f64,
    pub stationarity_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Vec<IterRecord>,
}

/// Dead-reckoned initialization: propagate the prior mean through the IMU
/// log; swing feet follow the kinematic chain, stance feet stay put.
pub fn init_trajectory(problem: &EstimationProblem) -> Vec<ManifoldState> {
    let n_f = problem.robot.n_f();
    let mut x = problem.prior_mean.clone();
    // feet from forward kinematics at the first sample
    for j in 0..n_f {
        let fk = crate::robot::forward_kinematics(
            &problem.robot,
            j,
            &problem.legs[0].joint_angles[j],
            &problem.offsets.foot[j],
        );
        x.foot_pos[j] = x.pose.transform(&fk);
    }
    let mut out = Vec::with_capacity(problem.imu.len());
    out.push(x);
    for k in 0..problem.horizon() {
        let mut next = process_propagate(&out[k], &problem.imu[k], problem.dt);
        for j in 0..n_f {
            if !problem.legs[k + 1].contact[j] {
                let fk = crate::robot::forward_kinematics(
                    &problem.robot,
                    j,
                    &problem.legs[k + 1].joint_angles[j],
                    &problem.offsets.foot[j],
                );
                next.foot_pos[j] = next.pose.transform(&fk);
            }
        }
        out.push(next);
    }
    out
}

/// Stacked weighted residuals at a trajectory; block labels expose the
/// per-term cost decomposition.
pub fn build_residuals(x: &[ManifoldState], problem: &EstimationProblem) -> Result<ResidualStack> {
    let ctx = assembly::Context::new(problem)?;
    assembly::residual_stack(&ctx, x)
}

/// Tangent-space gradient of the reduced MAP cost and its infinity norm.
pub fn kkt_residual(x: &[ManifoldState], problem: &EstimationProblem) -> Result<(DVector<f64>, f64)> {
    let ctx = assembly::Context::new(problem)?;
    let sys = assembly::assemble_gn(&ctx, x)?;
    let norm = sys.grad.amax();
    Ok((sys.grad, norm))
}

/// Total MAP cost at a trajectory.
pub fn trajectory_cost(x: &[ManifoldState], problem: &EstimationProblem) -> Result<f64> {
    let ctx = assembly::Context::new(problem)?;
    assembly::assemble_cost(&ctx, x)
}

/// Solve the full-information MAP program by damped Gauss-Newton with
/// Levenberg regularization adapted through the gain ratio.
pub fn solve_fie(problem: &EstimationProblem, init: Option<&[ManifoldState]>) -> Result<EstimateResult> {
    let ctx = assembly::Context::new(problem)?;
    let mut x: Vec<ManifoldState> = match init {
        Some(traj) => {
            if traj.len() != problem.imu.len() {
                return Err(Error::LengthMismatch {
                    left: traj.len(),
                    right: problem.imu.len(),
                    context: "init trajectory".to_string(),
                });
            }
            traj.to_vec()
        }
        None => init_trajectory(problem),
    };

    let s = &problem.settings;
    let d = ctx.dim;
    let blocks = problem.horizon() + 1;
    let mut lambda = s.lambda_init;
    let mut diagnostics = Vec::new();
    let mut converged = false;
    let mut saturated_rejects = 0usize;

    let mut sys = assembly::assemble_gn(&ctx, &x)?;
    let mut iterations = 0;
    for iter in 0..s.max_iterations {
        iterations = iter + 1;
        let grad_norm = sys.grad.amax();
        if grad_norm <= s.grad_tol {
            diagnostics.push(IterRecord {
                iteration: iter,
                cost: sys.cost,
                grad_norm,
                lambda,
                accepted: true,
            });
            converged = true;
            break;
        }

        // factor H + lambda I, escalating lambda while not PD
        let (chol, used_lambda) = loop {
            match BlockTridiagChol::factor(&sys.h.add_diagonal(lambda)) {
                Ok(c) => break (c, lambda),
                Err(_) => {
                    lambda *= 10.0;
                    if lambda > s.lambda_max {
                        return Err(Error::NotFactorizable { lambda });
                    }
                }
            }
        };
        lambda = used_lambda;

        let delta = chol.solve_vec(&(-&sys.grad));
        if delta.amax() <= s.step_tol {
            // the quadratic model offers no representable progress
            diagnostics.push(IterRecord {
                iteration: iter,
                cost: sys.cost,
                grad_norm,
                lambda,
                accepted: true,
            });
            converged = true;
            break;
        }
        let mut x_new = Vec::with_capacity(blocks);
        for (k, xk) in x.iter().enumerate() {
            x_new.push(boxplus(xk, &delta.rows(k * d, d).clone_owned()));
        }

        // predicted decrease of the quadratic model
        let g_dot_d = sys.grad.dot(&delta);
        let predicted = -0.5 * g_dot_d + 0.5 * lambda * delta.norm_squared();

        // below this, a real cost change is indistinguishable from rounding;
        // the endgame then accepts on gradient decrease instead
        let cost_floor = 1e-14 * (sys.cost.abs() + 1e-30);

        let mut accepted = false;
        if let Ok(cost_new) = assembly::assemble_cost(&ctx, &x_new) {
            if cost_new <= sys.cost + cost_floor {
                let new_sys = assembly::assemble_gn(&ctx, &x_new)?;
                // within the float floor a "decrease" is noise, so the
                // gradient must improve instead
                let decreased = sys.cost - cost_new > cost_floor;
                if decreased || new_sys.grad.amax() < grad_norm {
                    let gain = if decreased && predicted > 0.0 {
                        (sys.cost - cost_new) / predicted
                    } else {
                        1.0
                    };
                    let rel_change = (sys.cost - cost_new) / sys.cost.abs().max(1e-300);
                    x = x_new;
                    sys = new_sys;
                    diagnostics.push(IterRecord {
                        iteration: iter,
                        cost: sys.cost,
                        grad_norm: sys.grad.amax(),
                        lambda,
                        accepted: true,
                    });
                    if gain > 0.75 {
                        lambda = (lambda / 3.0).max(s.lambda_min);
                    } else if gain < 0.25 {
                        lambda = (lambda * 2.0).min(s.lambda_max);
                    }
                    // rel_cost_tol = 0 disables this criterion (probe mode)
                    if s.rel_cost_tol > 0.0 && rel_change.abs() <= s.rel_cost_tol {
                        converged = true;
                    }
                    accepted = true;
                }
            }
        }
        if !accepted {
            diagnostics.push(IterRecord {
                iteration: iter,
                cost: sys.cost,
                grad_norm,
                lambda,
                accepted: false,
            });
            if lambda >= s.lambda_max {
                saturated_rejects += 1;
                if saturated_rejects >= 5 {
                    // fully damped repeatedly and still no progress
                    converged = sys.grad.amax() <= s.grad_tol;
                    break;
                }
            }
            lambda = (lambda * 10.0).min(s.lambda_max);
        } else {
            saturated_rejects = 0;
        }
        if converged {
            break;
        }
    }

    let stationarity_norm = sys.grad.amax();
    if stationarity_norm <= s.grad_tol {
        converged = true;
    }
    Ok(EstimateResult {
        trajectory: x,
        cost: sys.cost,
        stationarity_norm,
        iterations,
        converged,
        diagnostics,
    })
}
