//! The upper-level optimizer: manifold trajectory loss against mocap ground
//! truth, chain-rule gradient through the smoother, box/PD feasible set with
//! a per-coordinate trust region, exact LMO, Armijo backtracking, and the
//! Frank-Wolfe loop.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::datagen::MocapSample;
use crate::error::{Error, Result};
use crate::estimator::{solve_fie, EstimateResult, EstimationProblem};
use crate::manifold::{se3_left_jacobian_inv, se3_log, slice, ManifoldState, Pose};
use crate::sensitivity;
use crate::theta::{ThetaKind, ThetaLayout};

/// Box bounds plus the trust-region schedule defining each iteration's
/// feasible set. The PD cone is enforced by the parameterization: lower
/// bounds on variances (diagonal mode) and on Cholesky diagonals (full
/// mode) stay strictly positive.
#[derive(Debug, Clone)]
pub struct FeasibleSet {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl FeasibleSet {
    /// Default bounds anchored at the initial parameters: each variance may
    /// travel four decades either way from its starting value (clipped to
    /// the global PD floor and cap), Cholesky diagonals two decades,
    /// off-diagonals symmetric, offsets within the robot's box.
    pub fn default_for(
        layout: &ThetaLayout,
        template: &crate::robot::CovarianceSpec,
        offset_bound: f64,
    ) -> Self {
        let m = layout.len();
        let mut lower = DVector::zeros(m);
        let mut upper = DVector::zeros(m);
        for (i, e) in layout.entries().iter().enumerate() {
            let (lo, hi) = match &e.kind {
                ThetaKind::Cov { block, param } => {
                    let v = template.block(block).params()[*param];
                    match template.block(block) {
                        crate::robot::CovBlock::Diag(_) => {
                            ((v * 1e-4).max(1e-12), (v * 1e4).min(10.0).max(1e-10))
                        }
                        crate::robot::CovBlock::Chol(_) => {
                            let cap = 10.0f64.sqrt();
                            if matches!(param, 0 | 2 | 5) {
                                ((v * 1e-2).max(1e-8), (v * 1e2).min(cap).max(1e-6))
                            } else {
                                (-cap, cap)
                            }
                        }
                    }
                }
                _ => (-offset_bound, offset_bound),
            };
            lower[i] = lo;
            upper[i] = hi;
        }
        FeasibleSet { lower, upper }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.lower.len() {
            if !(self.lower[i] < self.upper[i]) {
                return Err(Error::Config(format!(
                    "feasible set degenerate at component {i}: [{}, {}]",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, theta: &DVector<f64>, slack: f64) -> bool {
        (0..theta.len())
            .all(|i| theta[i] >= self.lower[i] - slack && theta[i] <= self.upper[i] + slack)
    }

    pub fn clamp(&self, theta: &mut DVector<f64>) {
        for i in 0..theta.len() {
            theta[i] = theta[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}

/// Per-step ground truth used by the upper loss: mocap pose and velocity.
fn corrected_gt_pose(sample: &MocapSample, theta_base: &Vector3<f64>) -> Pose {
    Pose::new(
        sample.pose.rot,
        sample.pose.trans - sample.pose.rot.rotate(theta_base),
    )
}

/// Trajectory-tracking loss: `1/2 sum ||log(T Tgt^-1)||^2 + 1/2 sum ||v - v_gt||^2`.
///
/// The mocap position is corrected by the base-to-marker offset; mocap does
/// not observe feet or biases, so only pose and velocity enter.
pub fn upper_loss(
    trajectory: &[ManifoldState],
    mocap: &[MocapSample],
    theta_base: &Vector3<f64>,
) -> Result<f64> {
    if trajectory.len() != mocap.len() {
        return Err(Error::LengthMismatch {
            left: trajectory.len(),
            right: mocap.len(),
            context: "trajectory vs ground truth".to_string(),
        });
    }
    let mut loss = 0.0;
    for (x, gt) in trajectory.iter().zip(mocap.iter()) {
        let t_gt = corrected_gt_pose(gt, theta_base);
        let xi = se3_log(&x.pose.compose(&t_gt.inverse()))?;
        loss += 0.5 * (xi.norm_squared() + (x.velocity - gt.velocity).norm_squared());
    }
    Ok(loss)
}

/// Left Jacobian row of the loss w.r.t. the trajectory (tangent
/// coordinates), plus the explicit base-offset derivative.
pub(crate) struct LossPieces {
    pub loss: f64,
    /// `D L / D xhat`, one row, `d` entries.
    pub dl_dx: DVector<f64>,
    /// `partial L / partial theta_base`, 3 entries.
    pub dl_dbase: Vector3<f64>,
}

pub(crate) fn loss_pieces(
    trajectory: &[ManifoldState],
    mocap: &[MocapSample],
    theta_base: &Vector3<f64>,
) -> Result<LossPieces> {
    if trajectory.len() != mocap.len() {
        return Err(Error::LengthMismatch {
            left: trajectory.len(),
            right: mocap.len(),
            context: "trajectory vs ground truth".to_string(),
        });
    }
    let d = trajectory[0].tangent_dim();
    let mut dl_dx = DVector::zeros(d * trajectory.len());
    let mut dl_dbase = Vector3::zeros();
    let mut loss = 0.0;
    for (k, (x, gt)) in trajectory.iter().zip(mocap.iter()).enumerate() {
        let t_gt = corrected_gt_pose(gt, theta_base);
        let xi = se3_log(&x.pose.compose(&t_gt.inverse()))?;
        let dv = x.velocity - gt.velocity;
        loss += 0.5 * (xi.norm_squared() + dv.norm_squared());

        // pose rows: xi^T Jl^-1(xi)
        let row = xi.transpose() * se3_left_jacobian_inv(&xi);
        for c in 0..6 {
            dl_dx[k * d + c] = row[c];
        }
        for c in 0..3 {
            dl_dx[k * d + slice::VEL + c] = dv[c];
        }

        // moving the marker offset shifts the corrected ground truth:
        // d xi = Jr^-1(xi) (0, R_gt delta), so dL/dbase = xi^T Jr^-1 [0; R_gt]
        let jr_inv = se3_left_jacobian_inv(&(-xi));
        let trans_cols = jr_inv.fixed_view::<6, 3>(0, 3) * t_gt.rot.to_matrix();
        dl_dbase += (xi.transpose() * trans_cols).transpose();
    }
    Ok(LossPieces { loss, dl_dx, dl_dbase })
}

/// Chain-rule gradient of the upper loss at a solved trajectory:
/// `(DL/Dx) Z + dL/dtheta`, with `Z` from the implicit function theorem.
pub fn loss_gradient(
    x: &[ManifoldState],
    problem: &EstimationProblem,
    mocap: &[MocapSample],
    layout: &ThetaLayout,
) -> Result<(f64, DVector<f64>)> {
    let pieces = loss_pieces(x, mocap, &problem.offsets.base)?;
    let (z, _) = sensitivity::sensitivity(x, problem, layout)?;
    let mut grad = (pieces.dl_dx.transpose() * &z.z).transpose();
    for (i, e) in layout.entries().iter().enumerate() {
        if let ThetaKind::Base { axis } = e.kind {
            grad[i] += pieces.dl_dbase[axis];
        }
    }
    Ok((pieces.loss, grad))
}

/// Exact linear minimization oracle over `box(lower, upper)` intersected
/// with the per-coordinate trust region `|s - theta| <= delta`.
pub fn lmo(
    grad: &DVector<f64>,
    theta: &DVector<f64>,
    fs: &FeasibleSet,
    delta: &DVector<f64>,
) -> DVector<f64> {
    let mut s = theta.clone();
    for i in 0..theta.len() {
        let lo = fs.lower[i].max(theta[i] - delta[i]);
        let hi = fs.upper[i].min(theta[i] + delta[i]);
        s[i] = if grad[i] > 0.0 {
            lo
        } else if grad[i] < 0.0 {
            hi
        } else {
            theta[i]
        };
    }
    s
}

/// Constraint-based LMO specialization for diagonal covariance blocks: the
/// PD-cone constraint reduces to elementwise floors on the variances, so
/// the program is the same box LP with the floor folded into the lower
/// bound.
pub fn lmo_constraint_diag(
    grad: &DVector<f64>,
    theta: &DVector<f64>,
    fs: &FeasibleSet,
    delta: &DVector<f64>,
    layout: &ThetaLayout,
    pd_floor: f64,
) -> DVector<f64> {
    let mut s = theta.clone();
    for (i, e) in layout.entries().iter().enumerate() {
        let mut lo = fs.lower[i].max(theta[i] - delta[i]);
        if matches!(e.kind, ThetaKind::Cov { .. }) {
            lo = lo.max(pd_floor);
        }
        let hi = fs.upper[i].min(theta[i] + delta[i]);
        s[i] = if grad[i] > 0.0 {
            lo
        } else if grad[i] < 0.0 {
            hi
        } else {
            theta[i]
        };
    }
    s
}

/// Outcome of one Armijo backtracking search.
#[derive(Debug, Clone)]
pub enum ArmijoOutcome {
    /// Step accepted with the given step size and achieved loss.
    Accepted { gamma: f64, loss: f64 },
    /// The direction was not a descent direction: `gamma = 0`.
    NonDescent,
    /// All backtracking trials failed the sufficient-decrease test.
    Exhausted,
}

/// Backtracking line search along the Frank-Wolfe direction:
/// largest `gamma in {1, beta, beta^2, ...}` with
/// `L(theta + gamma (s - theta)) <= L(theta) + rho gamma grad^T (s - theta)`.
pub fn armijo_search<F>(
    mut eval: F,
    loss0: f64,
    theta: &DVector<f64>,
    s_star: &DVector<f64>,
    grad: &DVector<f64>,
    rho: f64,
    beta: f64,
    k_max: usize,
) -> Result<ArmijoOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    let dir = s_star - theta;
    let slope = grad.dot(&dir);
    if slope > 0.0 {
        return Ok(ArmijoOutcome::NonDescent);
    }
    let mut gamma = 1.0;
    for _ in 0..=k_max {
        let trial = theta + gamma * &dir;
        match eval(&trial) {
            Ok(loss) if loss <= loss0 + rho * gamma * slope => {
                return Ok(ArmijoOutcome::Accepted { gamma, loss });
            }
            _ => gamma *= beta,
        }
    }
    Ok(ArmijoOutcome::Exhausted)
}

/// Frank-Wolfe loop parameters.
#[derive(Debug, Clone)]
pub struct FwConfig {
    pub rho: f64,
    pub beta: f64,
    pub k_max: usize,
    /// Initial trust-region scale as a fraction of the box width.
    pub delta0: f64,
    pub delta_shrink: f64,
    pub delta_grow: f64,
    pub delta_cap: f64,
    pub t_max: usize,
    /// Terminate when `gap <= gap_tol * (1 + |loss|)`.
    pub gap_tol: f64,
    /// Terminate when `||grad||_2 <= grad_tol`.
    pub grad_tol: f64,
    /// Stop after this many consecutive exhausted line searches.
    pub max_exhausted: usize,
}

impl Default for FwConfig {
    fn default() -> Self {
        FwConfig {
            rho: 1e-4,
            beta: 0.5,
            k_max: 30,
            delta0: 0.25,
            delta_shrink: 0.5,
            delta_grow: 1.5,
            delta_cap: 1.0,
            t_max: 100,
            gap_tol: 1e-8,
            grad_tol: 1e-10,
            max_exhausted: 10,
        }
    }
}

/// One Frank-Wolfe iteration record; `theta` is the iterate the row was
/// evaluated at.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub gap: f64,
    pub gamma: f64,
    pub delta_scale: f64,
    pub armijo_ok: bool,
    pub theta: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub theta: DVector<f64>,
    pub loss: f64,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    /// Smoother result at the returned parameters.
    pub estimate: EstimateResult,
}

/// Inputs of a calibration run. `problem` carries the template covariance
/// spec (parameterization mode), the initial theta, and the solver
/// settings; `mocap` is the ground-truth stream aligned with the log.
#[derive(Debug, Clone)]
pub struct CalibrationSetup {
    pub problem: EstimationProblem,
    pub mocap: Vec<MocapSample>,
    pub layout: ThetaLayout,
    pub feasible: FeasibleSet,
    pub fw: FwConfig,
}

/// Run the trust-region Frank-Wolfe loop; returns the best iterate, its
/// smoothed trajectory, and the full per-iteration trace.
pub fn calibrate(setup: &CalibrationSetup) -> Result<Calibration> {
    let CalibrationSetup { problem, mocap, layout, feasible, fw } = setup;
    feasible.validate()?;
    let m = layout.len();
    let mut theta = layout.pack(&problem.cov, &problem.offsets);
    if !feasible.contains(&theta, 0.0) {
        return Err(Error::Config("initial theta outside the feasible set".to_string()));
    }

    let problem_at = |t: &DVector<f64>| -> EstimationProblem {
        let (cov, offsets) = layout.unpack(t, &problem.cov);
        EstimationProblem { cov, offsets, ..problem.clone() }
    };

    // solve and score one candidate, warm-started from the current estimate.
    // The upper loss is only well-defined at converged smoother solutions;
    // an unconverged solve would make L(theta) depend on the warm-start
    // path, which the loop could then exploit.
    let eval = |t: &DVector<f64>, warm: Option<&[ManifoldState]>| -> Result<(f64, EstimateResult, bool)> {
        let p = problem_at(t);
        let res = solve_fie(&p, warm)?;
        let base = Vector3::new(t[m - 3], t[m - 2], t[m - 1]);
        let loss = upper_loss(&res.trajectory, mocap, &base)?;
        let converged = res.converged;
        Ok((loss, res, converged))
    };

    let (mut loss, mut estimate, initial_converged) = eval(&theta, None)?;
    if !initial_converged {
        return Err(Error::Config(
            "smoother did not converge at the initial parameters; raise solver.max_iterations"
                .to_string(),
        ));
    }
    let box_width = &feasible.upper - &feasible.lower;
    // trust radius per coordinate: relative to the current magnitude for
    // covariance entries (multiplicative parameters, may travel decades),
    // a small absolute fraction of the box for geometric offsets (gradients
    // far from the truth basin are not trustworthy over centimeters)
    let coord_scale = |t: &DVector<f64>, j: usize| -> f64 {
        match layout.entries()[j].kind {
            ThetaKind::Cov { .. } => 2.0 * t[j].abs().max(1e-6 * box_width[j]),
            _ => 0.05 * box_width[j],
        }
    };
    let is_cov = |j: usize| matches!(layout.entries()[j].kind, ThetaKind::Cov { .. });

    // the covariance and geometry families get independent trust scalars and
    // alternate by gap share: one family's line-search failures must not
    // collapse the other's radius
    let mut delta_scale = [fw.delta0; 2];
    let delta_floor = 1e-2 * fw.delta0;
    let mut trace: Vec<TraceRecord> = Vec::new();
    let mut best: (f64, DVector<f64>, EstimateResult) = (loss, theta.clone(), estimate.clone());
    let mut exhausted_streak = 0usize;
    let mut converged = false;
    let mut since_improvement = 0usize;

    for t in 0..=fw.t_max {
        let (loss_check, grad) =
            loss_gradient(&estimate.trajectory, &problem_at(&theta), mocap, layout)?;
        debug_assert!((loss_check - loss).abs() <= 1e-9 * (1.0 + loss.abs()));
        let grad_norm = grad.norm();

        // stationarity certificate over the full feasible set; a
        // trust-region gap shrinks with delta and would fake convergence
        let wide = DVector::from_element(m, f64::INFINITY);
        let s_full = lmo(&grad, &theta, feasible, &wide);
        let gap = grad.dot(&(&theta - &s_full));

        // strict alternation: raw-unit gaps of covariance coordinates can
        // dwarf the geometry family forever (they diverge while a
        // coordinate walks to its floor), so turns are not gap-weighted
        let family = t % 2;

        let delta = DVector::from_fn(m, |j, _| {
            if usize::from(!is_cov(j)) == family {
                delta_scale[family] * coord_scale(&theta, j)
            } else {
                0.0
            }
        });
        let s_star = lmo(&grad, &theta, feasible, &delta);

        let mut record = TraceRecord {
            iteration: t,
            loss,
            grad_norm,
            gap,
            gamma: 0.0,
            delta_scale: delta_scale[family],
            armijo_ok: false,
            theta: theta.clone(),
        };

        if gap <= fw.gap_tol * (1.0 + loss.abs()) || grad_norm <= fw.grad_tol {
            converged = true;
            trace.push(record);
            break;
        }
        if t == fw.t_max {
            trace.push(record);
            break;
        }

        // the line search caches the estimate of its last successful trial;
        // the accepted trial is always the last one evaluated
        let trial_cache: std::cell::RefCell<Option<EstimateResult>> =
            std::cell::RefCell::new(None);
        let outcome = armijo_search(
            |trial| {
                let (l, est, conv) = eval(trial, Some(&estimate.trajectory))?;
                if !conv {
                    return Ok(f64::INFINITY);
                }
                *trial_cache.borrow_mut() = Some(est);
                Ok(l)
            },
            loss,
            &theta,
            &s_star,
            &grad,
            fw.rho,
            fw.beta,
            fw.k_max,
        )?;

        match outcome {
            ArmijoOutcome::Accepted { gamma, loss: accepted_loss } => {
                let mut next = &theta + gamma * (&s_star - &theta);
                feasible.clamp(&mut next);
                theta = next;
                loss = accepted_loss;
                estimate = trial_cache
                    .into_inner()
                    .expect("accepted line search evaluated at least one trial");
                record.gamma = gamma;
                record.armijo_ok = true;
                exhausted_streak = 0;
                if gamma >= 0.5 {
                    delta_scale[family] = (delta_scale[family] * fw.delta_grow).min(fw.delta_cap);
                } else if gamma <= fw.beta.powi(4) {
                    // acceptance only at crumbs: the radius is too ambitious
                    delta_scale[family] =
                        (delta_scale[family] * fw.delta_shrink).max(delta_floor);
                }
                if loss < best.0 - 1e-12 * (1.0 + best.0.abs()) {
                    best = (loss, theta.clone(), estimate.clone());
                    since_improvement = 0;
                } else {
                    since_improvement += 1;
                }
            }
            ArmijoOutcome::NonDescent => {
                converged = true;
                trace.push(record);
                break;
            }
            ArmijoOutcome::Exhausted => {
                delta_scale[family] = (delta_scale[family] * fw.delta_shrink).max(delta_floor);
                exhausted_streak += 1;
                since_improvement += 1;
                if exhausted_streak >= fw.max_exhausted {
                    trace.push(record);
                    break;
                }
            }
        }
        trace.push(record);
        // the loop makes no measurable progress in either family: stop and
        // return the best iterate instead of burning the budget
        if since_improvement >= 24 {
            break;
        }
    }

    let (best_loss, best_theta, best_estimate) = best;
    Ok(Calibration {
        theta: best_theta,
        loss: best_loss,
        trace,
        converged,
        estimate: best_estimate,
    })
}

/// Gauss-Newton information matrix of the upper loss in theta: the loss
/// residual Jacobian `S Z + E` (loss rows of the sensitivity plus the
/// explicit base-offset block) contracted with itself. Its smallest
/// eigenvalue certifies that the excitation identifies every parameter.
pub fn information_matrix(
    x: &[ManifoldState],
    problem: &EstimationProblem,
    mocap: &[MocapSample],
    layout: &ThetaLayout,
) -> Result<DMatrix<f64>> {
    let (z, _) = sensitivity::sensitivity(x, problem, layout)?;
    let d = x[0].tangent_dim();
    let m = layout.len();
    let mut jac = DMatrix::zeros(9 * x.len(), m);
    for (k, (xk, gt)) in x.iter().zip(mocap.iter()).enumerate() {
        // loss rows: pose tangent (6) and velocity (3)
        for r in 0..6 {
            jac.view_mut((9 * k + r, 0), (1, m)).copy_from(&z.z.view((k * d + r, 0), (1, m)));
        }
        for r in 0..3 {
            jac.view_mut((9 * k + 6 + r, 0), (1, m))
                .copy_from(&z.z.view((k * d + slice::VEL + r, 0), (1, m)));
        }
        // explicit base-offset block on the pose rows
        let t_gt = corrected_gt_pose(gt, &problem.offsets.base);
        let xi = se3_log(&xk.pose.compose(&t_gt.inverse()))?;
        let block = se3_left_jacobian_inv(&(-xi)).fixed_view::<6, 3>(0, 3) * t_gt.rot.to_matrix();
        for (i, e) in layout.entries().iter().enumerate() {
            if let ThetaKind::Base { axis } = e.kind {
                for r in 0..6 {
                    jac[(9 * k + r, i)] += block[(r, axis)];
                }
            }
        }
    }
    Ok(jac.transpose() * &jac)
}

#[cfg(test)]
mod tests;
