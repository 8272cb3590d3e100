//! Residual, Jacobian and normal-equation assembly for the MAP smoother.
//!
//! Every residual is expressed so that its weight matrix does not depend on
//! the trajectory estimate:
//! - process and prior residuals live in the left tangent space,
//! - leg-odometry residuals are formed in the body frame, which is the
//!   world-frame formulation conjugated by `R_WB` and therefore carries the
//!   same cost with the un-rotated covariance `G R_z G^T`.
//!
//! Contact gating: the velocity channel of leg `j` at step `k` enters only
//! when `c_j(k) = 1`; the foot random-walk rows between `k` and `k+1` enter
//! only when the leg is in stance at both ends (a swing foot carries no
//! world-fixity information). The position channel is always active and
//! pins swing feet to the kinematic chain.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::manifold::{
    boxminus, se3_left_jacobian_inv, skew, slice, so3_left_jacobian, tangent_dim, twist_from_parts,
    ManifoldState, Twist,
};
use crate::robot::{
    assemble_prior_cov, assemble_process_cov, leg_kinematics, noise_mapping, r_z, LegKin,
    PriorNoise, ProcessNoise, GRAVITY, PD_FLOOR,
};
use crate::sensitivity::block_tridiag::BlockTridiag;

use super::EstimationProblem;

/// Inverse of a symmetric PD 3x3 block.
pub(crate) fn inv3(m: &Matrix3<f64>, context: &str) -> Result<Matrix3<f64>> {
    let chol = m.cholesky().ok_or_else(|| Error::NotPd { context: context.to_string() })?;
    Ok(chol.inverse())
}

/// Inverse covariances for the per-slice rows of a 27-dim residual.
#[derive(Debug, Clone)]
pub(crate) struct RowWeights {
    pub rot: Matrix3<f64>,
    pub pos: Matrix3<f64>,
    pub vel: Matrix3<f64>,
    pub foot: Matrix3<f64>,
    pub accel_bias: Matrix3<f64>,
    pub gyro_bias: Matrix3<f64>,
}

/// One leg's measurement channel: cached kinematics at the encoder reading
/// plus the induced covariances and their inverses.
#[derive(Debug, Clone)]
pub(crate) struct LegChannel {
    pub kin: LegKin,
    pub rates: Vector3<f64>,
    pub gp: nalgebra::SMatrix<f64, 3, 9>,
    pub gv: nalgebra::SMatrix<f64, 3, 9>,
    pub pos_cov: Matrix3<f64>,
    pub pos_w: Matrix3<f64>,
    pub vel_cov: Matrix3<f64>,
    pub vel_w: Matrix3<f64>,
    pub vel_active: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct StepContext {
    pub legs: Vec<LegChannel>,
    /// Bias-corrected gyro reference used inside the noise-mapping weights;
    /// uses the prior-mean bias so the weights stay estimate-independent.
    pub gyro_ref: Vector3<f64>,
}

/// Per-problem precomputation: everything that depends on theta and the log
/// but not on the trajectory.
pub(crate) struct Context<'a> {
    pub problem: &'a EstimationProblem,
    pub dim: usize,
    pub proc: ProcessNoise,
    pub proc_w: RowWeights,
    pub prior: PriorNoise,
    pub prior_w: RowWeights,
    pub steps: Vec<StepContext>,
    /// Foot process gate per step pair `k -> k+1`, per leg.
    pub foot_gate: Vec<Vec<bool>>,
    /// Active 3-row weight groups of the prior residual.
    pub prior_groups: Vec<(usize, Matrix3<f64>)>,
    /// Active 3-row weight groups of each process residual (gating folded in).
    pub proc_groups: Vec<Vec<(usize, Matrix3<f64>)>>,
}

impl<'a> Context<'a> {
    pub fn new(problem: &'a EstimationProblem) -> Result<Self> {
        problem.validate()?;
        let n_f = problem.robot.n_f();
        let dt = problem.dt;
        let proc = assemble_process_cov(&problem.cov, dt)?;
        let prior = assemble_prior_cov(&problem.cov);
        let proc_w = RowWeights {
            rot: inv3(&proc.rot, "process rot")?,
            pos: inv3(&proc.pos, "process pos")?,
            vel: inv3(&proc.vel, "process vel")?,
            foot: inv3(&proc.foot, "process foot")?,
            accel_bias: inv3(&proc.accel_bias, "process accel bias")?,
            gyro_bias: inv3(&proc.gyro_bias, "process gyro bias")?,
        };
        let prior_w = RowWeights {
            rot: inv3(&prior.rot, "prior rot")?,
            pos: inv3(&prior.pos, "prior pos")?,
            vel: inv3(&prior.vel, "prior vel")?,
            foot: inv3(&prior.foot, "prior foot")?,
            accel_bias: inv3(&prior.accel_bias, "prior accel bias")?,
            gyro_bias: inv3(&prior.gyro_bias, "prior gyro bias")?,
        };

        let rz = r_z(&problem.cov);
        let mut steps = Vec::with_capacity(problem.imu.len());
        for k in 0..problem.imu.len() {
            let gyro_ref = problem.imu[k].gyro - problem.prior_mean.gyro_bias;
            let mut legs = Vec::with_capacity(n_f);
            for j in 0..n_f {
                let kin = leg_kinematics(
                    &problem.robot,
                    j,
                    &problem.legs[k].joint_angles[j],
                    &problem.legs[k].joint_rates[j],
                    &problem.offsets.foot[j],
                );
                let (gp, gv) = noise_mapping(&kin, &gyro_ref);
                let pos_cov: Matrix3<f64> =
                    Matrix3::from(gp * rz * gp.transpose()) + Matrix3::identity() * PD_FLOOR;
                let vel_cov: Matrix3<f64> =
                    Matrix3::from(gv * rz * gv.transpose()) + Matrix3::identity() * PD_FLOOR;
                legs.push(LegChannel {
                    pos_w: inv3(&pos_cov, "measurement pos")?,
                    vel_w: inv3(&vel_cov, "measurement vel")?,
                    pos_cov,
                    vel_cov,
                    kin,
                    rates: problem.legs[k].joint_rates[j],
                    gp,
                    gv,
                    vel_active: problem.legs[k].contact[j],
                });
            }
            steps.push(StepContext { legs, gyro_ref });
        }

        let horizon = problem.horizon();
        let mut foot_gate: Vec<Vec<bool>> = Vec::with_capacity(horizon);
        for k in 0..horizon {
            foot_gate.push(
                (0..n_f)
                    .map(|j| problem.legs[k].contact[j] && problem.legs[k + 1].contact[j])
                    .collect(),
            );
        }

        let groups_for = |w: &RowWeights, gate: Option<&[bool]>| {
            let mut g = vec![
                (slice::ROT, w.rot),
                (slice::TRANS, w.pos),
                (slice::VEL, w.vel),
            ];
            for j in 0..n_f {
                if gate.map_or(true, |flags| flags[j]) {
                    g.push((slice::foot(j), w.foot));
                }
            }
            g.push((slice::accel_bias(n_f), w.accel_bias));
            g.push((slice::gyro_bias(n_f), w.gyro_bias));
            g
        };
        let prior_groups = groups_for(&prior_w, None);
        let proc_groups = (0..horizon)
            .map(|k| groups_for(&proc_w, Some(&foot_gate[k])))
            .collect();

        Ok(Context {
            problem,
            dim: tangent_dim(n_f),
            proc,
            proc_w,
            prior,
            prior_w,
            steps,
            foot_gate,
            prior_groups,
            proc_groups,
        })
    }

    pub fn n_f(&self) -> usize {
        self.problem.robot.n_f()
    }

    pub fn horizon(&self) -> usize {
        self.problem.horizon()
    }
}

/// Process residual and its prediction for one step pair.
pub(crate) struct ProcessResidual {
    pub r: DVector<f64>,
    pub xi: Twist,
    pub predicted: ManifoldState,
}

pub(crate) fn process_residual(
    ctx: &Context,
    x_k: &ManifoldState,
    x_k1: &ManifoldState,
    k: usize,
) -> Result<ProcessResidual> {
    let predicted = crate::robot::process_propagate(x_k, &ctx.problem.imu[k], ctx.problem.dt);
    let r = boxminus(x_k1, &predicted)?;
    let xi = twist_from_parts(&Vector3::new(r[0], r[1], r[2]), &Vector3::new(r[3], r[4], r[5]));
    Ok(ProcessResidual { r, xi, predicted })
}

/// Body-frame measurement residuals for one leg at one step.
pub(crate) fn meas_residuals(
    x: &ManifoldState,
    ch: &LegChannel,
    gyro: &Vector3<f64>,
    j: usize,
) -> (Vector3<f64>, Option<Vector3<f64>>) {
    let rot = &x.pose.rot;
    let r_p = rot.inverse_rotate(&(x.foot_pos[j] - x.pose.trans)) - ch.kin.fk;
    let r_v = if ch.vel_active {
        let omega = gyro - x.gyro_bias;
        Some(-(ch.kin.jac * ch.rates) - omega.cross(&ch.kin.fk) - rot.inverse_rotate(&x.velocity))
    } else {
        None
    };
    (r_p, r_v)
}

/// Measurement-residual Jacobian entries w.r.t. the step tangent: a list of
/// `(column slice offset, 3x3 block)`.
pub(crate) fn meas_pos_jacobian(
    x: &ManifoldState,
    j: usize,
    n_f: usize,
) -> [(usize, Matrix3<f64>); 3] {
    let rt = x.pose.rot.to_matrix().transpose();
    let _ = n_f;
    [
        (slice::ROT, rt * skew(&x.foot_pos[j])),
        (slice::TRANS, -rt),
        (slice::foot(j), rt),
    ]
}

pub(crate) fn meas_vel_jacobian(
    x: &ManifoldState,
    ch: &LegChannel,
    n_f: usize,
) -> [(usize, Matrix3<f64>); 3] {
    let rt = x.pose.rot.to_matrix().transpose();
    [
        (slice::ROT, -rt * skew(&x.velocity)),
        (slice::VEL, -rt),
        (slice::gyro_bias(n_f), -skew(&ch.kin.fk)),
    ]
}

/// Pose rows of the process Jacobian w.r.t. the tangent of `x_k`: the
/// left-tangent motion of the predicted pose per unit perturbation of the
/// current state, before the `-Jr^-1(xi)` factor.
pub(crate) fn predicted_pose_tangent_map(
    ctx: &Context,
    x_k: &ManifoldState,
    predicted: &ManifoldState,
    k: usize,
) -> DMatrix<f64> {
    let dt = ctx.problem.dt;
    let n_f = ctx.n_f();
    let u = &ctx.problem.imu[k];
    let r_k = x_k.pose.rot.to_matrix();
    let r_bar = predicted.pose.rot.to_matrix();
    let phi = (u.gyro - x_k.gyro_bias) * dt;
    // right Jacobian of SO(3): Jr(phi) = Jl(-phi)
    let jr = so3_left_jacobian(&(-phi));
    let g_bw = r_bar * jr * dt;

    let mut a = DMatrix::zeros(6, ctx.dim);
    // rotation row
    a.fixed_view_mut::<3, 3>(0, slice::ROT).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(0, slice::gyro_bias(n_f)).copy_from(&(-g_bw));
    // translation row (left-tangent rho of the predicted pose)
    a.fixed_view_mut::<3, 3>(3, slice::ROT)
        .copy_from(&skew(&(x_k.velocity * dt + GRAVITY * (0.5 * dt * dt))));
    a.fixed_view_mut::<3, 3>(3, slice::TRANS).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(3, slice::VEL).copy_from(&(Matrix3::identity() * dt));
    a.fixed_view_mut::<3, 3>(3, slice::accel_bias(n_f))
        .copy_from(&(-r_k * (0.5 * dt * dt)));
    a.fixed_view_mut::<3, 3>(3, slice::gyro_bias(n_f))
        .copy_from(&(-skew(&predicted.pose.trans) * g_bw));
    a
}

/// Full process Jacobians (w.r.t. `x_k` and `x_{k+1}` tangents).
pub(crate) fn process_jacobians(
    ctx: &Context,
    x_k: &ManifoldState,
    pr: &ProcessResidual,
    k: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = ctx.dim;
    let n_f = ctx.n_f();
    let dt = ctx.problem.dt;
    let u = &ctx.problem.imu[k];
    let r_k = x_k.pose.rot.to_matrix();
    let u_vec = r_k * (u.accel - x_k.accel_bias);

    // w.r.t. x_{k+1}
    let mut j1 = DMatrix::zeros(d, d);
    let jl_inv = se3_left_jacobian_inv(&pr.xi);
    j1.view_mut((0, 0), (6, 6)).copy_from(&jl_inv);
    for i in 6..d {
        j1[(i, i)] = 1.0;
    }

    // w.r.t. x_k
    let mut j0 = DMatrix::zeros(d, d);
    let jr_inv = se3_left_jacobian_inv(&(-pr.xi)); // Jr^-1(xi)
    let a = predicted_pose_tangent_map(ctx, x_k, &pr.predicted, k);
    let pose_rows = -jr_inv * &a;
    j0.view_mut((0, 0), (6, d)).copy_from(&pose_rows);
    // velocity rows
    j0.fixed_view_mut::<3, 3>(slice::VEL, slice::ROT).copy_from(&(skew(&u_vec) * dt));
    j0.fixed_view_mut::<3, 3>(slice::VEL, slice::VEL).copy_from(&(-Matrix3::identity()));
    j0.fixed_view_mut::<3, 3>(slice::VEL, slice::accel_bias(n_f))
        .copy_from(&(r_k * dt));
    // foot and bias rows
    for j in 0..n_f {
        for i in 0..3 {
            j0[(slice::foot(j) + i, slice::foot(j) + i)] = -1.0;
        }
    }
    for i in 0..3 {
        j0[(slice::accel_bias(n_f) + i, slice::accel_bias(n_f) + i)] = -1.0;
        j0[(slice::gyro_bias(n_f) + i, slice::gyro_bias(n_f) + i)] = -1.0;
    }
    (j0, j1)
}

/// Prior Jacobian w.r.t. the tangent of `x_0`.
pub(crate) fn prior_jacobian(ctx: &Context, xi: &Twist) -> DMatrix<f64> {
    let d = ctx.dim;
    let mut j = DMatrix::zeros(d, d);
    j.view_mut((0, 0), (6, 6)).copy_from(&se3_left_jacobian_inv(xi));
    for i in 6..d {
        j[(i, i)] = 1.0;
    }
    j
}

/// Row weights of one process (or prior) residual with foot gating applied.
pub(crate) fn row_weight_matrix(
    w: &RowWeights,
    n_f: usize,
    dim: usize,
    foot_gate: Option<&[bool]>,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    m.fixed_view_mut::<3, 3>(slice::ROT, slice::ROT).copy_from(&w.rot);
    m.fixed_view_mut::<3, 3>(slice::TRANS, slice::TRANS).copy_from(&w.pos);
    m.fixed_view_mut::<3, 3>(slice::VEL, slice::VEL).copy_from(&w.vel);
    for j in 0..n_f {
        let active = foot_gate.map_or(true, |g| g[j]);
        if active {
            m.fixed_view_mut::<3, 3>(slice::foot(j), slice::foot(j)).copy_from(&w.foot);
        }
    }
    m.fixed_view_mut::<3, 3>(slice::accel_bias(n_f), slice::accel_bias(n_f))
        .copy_from(&w.accel_bias);
    m.fixed_view_mut::<3, 3>(slice::gyro_bias(n_f), slice::gyro_bias(n_f))
        .copy_from(&w.gyro_bias);
    m
}

/// Normal-equation system of one Gauss-Newton iteration:
/// `cost = sum r^T W r`, `grad = sum 2 J^T W r`, `H = sum 2 J^T W J`.
pub(crate) struct GnSystem {
    pub h: BlockTridiag,
    pub grad: DVector<f64>,
    pub cost: f64,
}

#[inline]
fn group_residual(r: &DVector<f64>, off: usize) -> Vector3<f64> {
    Vector3::new(r[off], r[off + 1], r[off + 2])
}

pub(crate) fn assemble_cost(ctx: &Context, x: &[ManifoldState]) -> Result<f64> {
    let horizon = ctx.horizon();
    let mut cost = 0.0;

    let r0 = boxminus(&x[0], &ctx.problem.prior_mean)?;
    for (off, w) in &ctx.prior_groups {
        let r_g = group_residual(&r0, *off);
        cost += r_g.dot(&(w * r_g));
    }

    for k in 0..horizon {
        let pr = process_residual(ctx, &x[k], &x[k + 1], k)?;
        for (off, w) in &ctx.proc_groups[k] {
            let r_g = group_residual(&pr.r, *off);
            cost += r_g.dot(&(w * r_g));
        }
    }

    for (k, xk) in x.iter().enumerate() {
        let step = &ctx.steps[k];
        let gyro = ctx.problem.imu[k].gyro;
        for (j, ch) in step.legs.iter().enumerate() {
            let (r_p, r_v) = meas_residuals(xk, ch, &gyro, j);
            cost += r_p.dot(&(ch.pos_w * r_p));
            if let Some(rv) = r_v {
                cost += rv.dot(&(ch.vel_w * rv));
            }
        }
    }
    Ok(cost)
}

pub(crate) fn assemble_gn(ctx: &Context, x: &[ManifoldState]) -> Result<GnSystem> {
    let d = ctx.dim;
    let n_f = ctx.n_f();
    let horizon = ctx.horizon();
    let blocks = horizon + 1;
    let mut h = BlockTridiag::zeros(d, blocks);
    let mut grad = DVector::zeros(d * blocks);
    let mut cost = 0.0;

    // prior on x_0: pose rows dense in the first six columns, the rest are
    // identity rows
    {
        let r0 = boxminus(&x[0], &ctx.problem.prior_mean)?;
        let xi = twist_from_parts(
            &Vector3::new(r0[0], r0[1], r0[2]),
            &Vector3::new(r0[3], r0[4], r0[5]),
        );
        let jl_inv = se3_left_jacobian_inv(&xi);
        for (off, w) in &ctx.prior_groups {
            let r_g = group_residual(&r0, *off);
            let wr = w * r_g;
            cost += r_g.dot(&wr);
            if *off < 6 {
                let rows = jl_inv.fixed_view::<3, 6>(*off, 0);
                let w_rows = w * rows;
                h.diag[0].view_mut((0, 0), (6, 6)).gemm_tr(2.0, &rows, &w_rows, 1.0);
                let g = rows.transpose() * wr;
                for i in 0..6 {
                    grad[i] += 2.0 * g[i];
                }
            } else {
                let mut view = h.diag[0].fixed_view_mut::<3, 3>(*off, *off);
                view += 2.0 * w;
                for i in 0..3 {
                    grad[*off + i] += 2.0 * wr[i];
                }
            }
        }
    }

    // process rows. J0 structure: pose rows dense (6 x d), velocity rows
    // carry three 3x3 entries, foot and bias rows are -I. J1 structure:
    // Jl^-1 on the pose block, +I elsewhere.
    for k in 0..horizon {
        let pr = process_residual(ctx, &x[k], &x[k + 1], k)?;
        let dt = ctx.problem.dt;
        let u = &ctx.problem.imu[k];
        let r_k = x[k].pose.rot.to_matrix();
        let u_vec = r_k * (u.accel - x[k].accel_bias);
        let jl_inv = se3_left_jacobian_inv(&pr.xi);
        let jr_inv = se3_left_jacobian_inv(&(-pr.xi));
        let a_map = predicted_pose_tangent_map(ctx, &x[k], &pr.predicted, k);
        let pose_rows = -jr_inv * &a_map; // 6 x d dense block of J0
        let vel_entries: [(usize, Matrix3<f64>); 3] = [
            (slice::ROT, skew(&u_vec) * dt),
            (slice::VEL, -Matrix3::identity()),
            (slice::accel_bias(n_f), r_k * dt),
        ];

        for (off, w) in &ctx.proc_groups[k] {
            let r_g = group_residual(&pr.r, *off);
            let wr = w * r_g;
            cost += r_g.dot(&wr);
            if *off < 6 {
                // J0 pose rows (dense) and J1 pose rows (cols 0..6)
                let j0_rows = pose_rows.view((*off, 0), (3, d));
                let w_j0 = w * j0_rows;
                h.diag[k].gemm_tr(2.0, &j0_rows, &w_j0, 1.0);
                let g0 = j0_rows.transpose() * wr;
                for i in 0..d {
                    grad[k * d + i] += 2.0 * g0[i];
                }
                let j1_rows = jl_inv.fixed_view::<3, 6>(*off, 0);
                let w_j1 = w * j1_rows;
                h.diag[k + 1].view_mut((0, 0), (6, 6)).gemm_tr(2.0, &j1_rows, &w_j1, 1.0);
                h.upper[k].view_mut((0, 0), (d, 6)).gemm_tr(2.0, &j0_rows, &w_j1, 1.0);
                let g1 = j1_rows.transpose() * wr;
                for i in 0..6 {
                    grad[(k + 1) * d + i] += 2.0 * g1[i];
                }
            } else if *off == slice::VEL {
                // sparse triplet rows of J0, +I row of J1
                for (ca, a) in &vel_entries {
                    let at_w = a.transpose() * w;
                    for (cb, b) in &vel_entries {
                        let block = 2.0 * at_w * b;
                        let mut view = h.diag[k].fixed_view_mut::<3, 3>(*ca, *cb);
                        view += block;
                    }
                    let ga = at_w * r_g;
                    for i in 0..3 {
                        grad[k * d + ca + i] += 2.0 * ga[i];
                    }
                    // H(k,k+1): a^T W into (ca, VEL)
                    let mut view = h.upper[k].fixed_view_mut::<3, 3>(*ca, slice::VEL);
                    view += 2.0 * at_w;
                }
                let mut view = h.diag[k + 1].fixed_view_mut::<3, 3>(slice::VEL, slice::VEL);
                view += 2.0 * w;
                for i in 0..3 {
                    grad[(k + 1) * d + slice::VEL + i] += 2.0 * wr[i];
                }
            } else {
                // J0 = -I, J1 = +I at this slice
                let two_w = 2.0 * w;
                {
                    let mut view = h.diag[k].fixed_view_mut::<3, 3>(*off, *off);
                    view += two_w;
                }
                {
                    let mut view = h.diag[k + 1].fixed_view_mut::<3, 3>(*off, *off);
                    view += two_w;
                }
                {
                    let mut view = h.upper[k].fixed_view_mut::<3, 3>(*off, *off);
                    view -= two_w;
                }
                for i in 0..3 {
                    grad[k * d + *off + i] -= 2.0 * wr[i];
                    grad[(k + 1) * d + *off + i] += 2.0 * wr[i];
                }
            }
        }
    }

    // measurement rows
    for (k, xk) in x.iter().enumerate() {
        let step = &ctx.steps[k];
        let gyro = ctx.problem.imu[k].gyro;
        for (j, ch) in step.legs.iter().enumerate() {
            let (r_p, r_v) = meas_residuals(xk, ch, &gyro, j);
            let jp = meas_pos_jacobian(xk, j, n_f);
            accumulate_small(&mut h.diag[k], &mut grad.rows_mut(k * d, d), &jp, &ch.pos_w, &r_p);
            cost += r_p.dot(&(ch.pos_w * r_p));
            if let Some(rv) = r_v {
                let jv = meas_vel_jacobian(xk, ch, n_f);
                accumulate_small(&mut h.diag[k], &mut grad.rows_mut(k * d, d), &jv, &ch.vel_w, &rv);
                cost += rv.dot(&(ch.vel_w * rv));
            }
        }
    }

    Ok(GnSystem { h, grad, cost })
}

/// Accumulate a 3-row residual block with sparse column entries into the
/// step-diagonal Hessian block and gradient segment.
fn accumulate_small(
    diag: &mut DMatrix<f64>,
    grad_seg: &mut nalgebra::DVectorViewMut<f64>,
    entries: &[(usize, Matrix3<f64>)],
    w: &Matrix3<f64>,
    r: &Vector3<f64>,
) {
    for (ca, a) in entries {
        let at_w = a.transpose() * w;
        for (cb, b) in entries {
            let block = 2.0 * at_w * b;
            let mut view = diag.fixed_view_mut::<3, 3>(*ca, *cb);
            view += block;
        }
        let gseg = 2.0 * at_w * r;
        for i in 0..3 {
            grad_seg[*ca + i] += gseg[i];
        }
    }
}

/// Weighted-residual stack; public through `estimator::build_residuals`.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub label: String,
    pub residual: DVector<f64>,
    pub weight: DMatrix<f64>,
}

impl ResidualBlock {
    pub fn cost(&self) -> f64 {
        (self.residual.transpose() * &self.weight * &self.residual)[(0, 0)]
    }
}

#[derive(Debug, Clone)]
pub struct ResidualStack {
    pub blocks: Vec<ResidualBlock>,
}

impl ResidualStack {
    pub fn cost(&self) -> f64 {
        self.blocks.iter().map(|b| b.cost()).sum()
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n: usize = self.blocks.iter().map(|b| b.residual.len()).sum();
        let mut out = DVector::zeros(n);
        let mut at = 0;
        for b in &self.blocks {
            out.rows_mut(at, b.residual.len()).copy_from(&b.residual);
            at += b.residual.len();
        }
        out
    }
}

fn block3(label: String, r: Vector3<f64>, w: Matrix3<f64>) -> ResidualBlock {
    ResidualBlock {
        label,
        residual: DVector::from_column_slice(r.as_slice()),
        weight: DMatrix::from_fn(3, 3, |i, j| w[(i, j)]),
    }
}

pub(crate) fn residual_stack(ctx: &Context, x: &[ManifoldState]) -> Result<ResidualStack> {
    let n_f = ctx.n_f();
    let mut blocks = Vec::new();

    let r0 = boxminus(&x[0], &ctx.problem.prior_mean)?;
    blocks.push(ResidualBlock {
        label: "prior".to_string(),
        weight: row_weight_matrix(&ctx.prior_w, n_f, ctx.dim, None),
        residual: r0,
    });

    for k in 0..ctx.horizon() {
        let pr = process_residual(ctx, &x[k], &x[k + 1], k)?;
        let groups: [(&str, usize, Matrix3<f64>); 5] = [
            ("rot", slice::ROT, ctx.proc_w.rot),
            ("pos", slice::TRANS, ctx.proc_w.pos),
            ("vel", slice::VEL, ctx.proc_w.vel),
            ("accel_bias", slice::accel_bias(n_f), ctx.proc_w.accel_bias),
            ("gyro_bias", slice::gyro_bias(n_f), ctx.proc_w.gyro_bias),
        ];
        for (name, off, w) in groups {
            let r = Vector3::new(pr.r[off], pr.r[off + 1], pr.r[off + 2]);
            blocks.push(block3(format!("process_{name}[{k}]"), r, w));
        }
        for j in 0..n_f {
            if ctx.foot_gate[k][j] {
                let off = slice::foot(j);
                let r = Vector3::new(pr.r[off], pr.r[off + 1], pr.r[off + 2]);
                blocks.push(block3(format!("process_foot[{k},{j}]"), r, ctx.proc_w.foot));
            }
        }
    }

    for (k, xk) in x.iter().enumerate() {
        let gyro = ctx.problem.imu[k].gyro;
        for (j, ch) in ctx.steps[k].legs.iter().enumerate() {
            let (r_p, r_v) = meas_residuals(xk, ch, &gyro, j);
            blocks.push(block3(format!("meas_pos[{k},{j}]"), r_p, ch.pos_w));
            if let Some(rv) = r_v {
                blocks.push(block3(format!("meas_vel[{k},{j}]"), rv, ch.vel_w));
            }
        }
    }

    Ok(ResidualStack { blocks })
}
