//! Implicit differentiation of the smoother optimum with respect to the
//! calibration parameters: one sparse factorization, many back-substituted
//! right-hand sides.
//!
//! The reduced KKT residual is the tangent-space gradient of the MAP cost,
//! `F(x, theta) = grad J(x, theta)`. At a stationary point,
//! `(dF/dx) Z = -dF/dtheta` gives the sensitivity `Z = dx/dtheta` in tangent
//! coordinates. `dF/dx` is approximated by the Gauss-Newton Hessian (exact
//! at zero residual); `dF/dtheta` is assembled analytically and collects
//! every parameter path: inverse-covariance weights `Q^-1, R^-1`, the
//! measured channels `y(theta)`, and the noise mapping `G(theta)`.

pub mod block_tridiag;

pub use block_tridiag::{BlockTridiag, BlockTridiagChol};

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::estimator::assembly::{self, Context};
use crate::estimator::EstimationProblem;
use crate::manifold::{slice, ManifoldState};
use crate::theta::{ThetaKind, ThetaLayout};

/// The linear system of the implicit function theorem: Gauss-Newton KKT
/// Jacobian, right-hand sides, and the factorization bookkeeping.
pub struct SparseKktSystem {
    pub h: BlockTridiag,
    pub rhs: DMatrix<f64>,
    factorization: Option<BlockTridiagChol>,
    /// Successful factorizations performed on this system.
    pub factorizations: usize,
}

impl SparseKktSystem {
    pub fn new(h: BlockTridiag, rhs: DMatrix<f64>) -> Self {
        SparseKktSystem { h, rhs, factorization: None, factorizations: 0 }
    }

    /// Factor the KKT matrix, escalating a Levenberg shift on failure.
    pub fn factorize(&mut self) -> Result<()> {
        let mut lambda = 0.0;
        loop {
            let shifted = if lambda == 0.0 { self.h.clone() } else { self.h.add_diagonal(lambda) };
            match BlockTridiagChol::factor(&shifted) {
                Ok(c) => {
                    self.factorization = Some(c);
                    self.factorizations += 1;
                    return Ok(());
                }
                Err(_) => {
                    lambda = if lambda == 0.0 { 1e-10 } else { lambda * 10.0 };
                    if lambda > 1e-2 {
                        return Err(Error::NotFactorizable { lambda });
                    }
                }
            }
        }
    }
}

/// Tangent-space sensitivity `Z = d xhat / d theta`, `d x m`.
#[derive(Debug, Clone)]
pub struct SensitivityMatrix {
    pub z: DMatrix<f64>,
}

/// Gauss-Newton Hessian of the reduced cost at `x`, block-tridiagonal.
pub fn assemble_kkt_jacobian(x: &[ManifoldState], problem: &EstimationProblem) -> Result<BlockTridiag> {
    let ctx = Context::new(problem)?;
    Ok(assembly::assemble_gn(&ctx, x)?.h)
}

/// `B = -dF/dtheta` at fixed `x`: one column per theta component.
pub fn assemble_rhs(
    x: &[ManifoldState],
    problem: &EstimationProblem,
    layout: &ThetaLayout,
) -> Result<DMatrix<f64>> {
    let ctx = Context::new(problem)?;
    assemble_rhs_with(&ctx, x, layout)
}

/// Solve `H Z = B` column by column against one factorization.
pub fn solve_sensitivity(system: &mut SparseKktSystem) -> Result<SensitivityMatrix> {
    if system.factorization.is_none() {
        system.factorize()?;
    }
    let chol = system.factorization.as_ref().expect("factorized above");
    Ok(SensitivityMatrix { z: chol.solve_matrix(&system.rhs) })
}

/// Convenience path: assemble both sides at `x` and solve.
pub fn sensitivity(
    x: &[ManifoldState],
    problem: &EstimationProblem,
    layout: &ThetaLayout,
) -> Result<(SensitivityMatrix, SparseKktSystem)> {
    let ctx = Context::new(problem)?;
    let h = assembly::assemble_gn(&ctx, x)?.h;
    let rhs = assemble_rhs_with(&ctx, x, layout)?;
    let mut system = SparseKktSystem::new(h, rhs);
    let z = solve_sensitivity(&mut system)?;
    Ok((z, system))
}

/// Which process row group a covariance block drives, with its dt scaling.
fn process_row_target(block: &str, n_f: usize, dt: f64) -> Option<(Vec<usize>, f64)> {
    match block {
        "q_rot" => Some((vec![slice::ROT], dt * dt)),
        "q_pos" => Some((vec![slice::TRANS], dt)),
        "q_vel" => Some((vec![slice::VEL], dt * dt)),
        "q_foot" => Some(((0..n_f).map(slice::foot).collect(), dt)),
        "q_accel_bias" => Some((vec![slice::accel_bias(n_f)], dt)),
        "q_gyro_bias" => Some((vec![slice::gyro_bias(n_f)], dt)),
        _ => None,
    }
}

/// Offset of a covariance block inside the proprioceptive stack `R_z`.
fn rz_offset(block: &str) -> Option<usize> {
    match block {
        "r_joint" => Some(0),
        "r_joint_rate" => Some(3),
        "q_rot" => Some(6),
        _ => None,
    }
}

pub(crate) fn assemble_rhs_with(
    ctx: &Context,
    x: &[ManifoldState],
    layout: &ThetaLayout,
) -> Result<DMatrix<f64>> {
    let d = ctx.dim;
    let n_f = ctx.n_f();
    let dt = ctx.problem.dt;
    let m = layout.len();
    let mut dgrad = DMatrix::<f64>::zeros(d * x.len(), m);
    let cov = &ctx.problem.cov;
    let rz = crate::robot::r_z(cov);
    let r_alpha = cov.r_joint.matrix();

    // weight lookup per process row group
    let proc_w_at = |off: usize| -> Matrix3<f64> {
        if off == slice::ROT {
            ctx.proc_w.rot
        } else if off == slice::TRANS {
            ctx.proc_w.pos
        } else if off == slice::VEL {
            ctx.proc_w.vel
        } else if off == slice::accel_bias(n_f) {
            ctx.proc_w.accel_bias
        } else if off == slice::gyro_bias(n_f) {
            ctx.proc_w.gyro_bias
        } else {
            ctx.proc_w.foot
        }
    };

    // ---- process blocks: theta enters only through the weights
    for k in 0..ctx.horizon() {
        let pr = assembly::process_residual(ctx, &x[k], &x[k + 1], k)?;
        let (j0, j1) = assembly::process_jacobians(ctx, &x[k], &pr, k);
        for (i, entry) in layout.entries().iter().enumerate() {
            let ThetaKind::Cov { block, param } = &entry.kind else { continue };
            let Some((offsets, scale)) = process_row_target(block, n_f, dt) else { continue };
            let d_sigma = cov.block(block).d_matrix_d_param(*param) * scale;
            for off in offsets {
                if off >= slice::FOOT && off < slice::accel_bias(n_f) {
                    let leg = (off - slice::FOOT) / 3;
                    if !ctx.foot_gate[k][leg] {
                        continue;
                    }
                }
                let w = proc_w_at(off);
                let dw = -w * d_sigma * w;
                let r_g = Vector3::new(pr.r[off], pr.r[off + 1], pr.r[off + 2]);
                let dwr = dw * r_g;
                // rows `off..off+3` of J0/J1, transposed into the columns
                for (jmat, base) in [(&j0, k * d), (&j1, (k + 1) * d)] {
                    for col in 0..d {
                        let mut acc = 0.0;
                        for rr in 0..3 {
                            acc += jmat[(off + rr, col)] * dwr[rr];
                        }
                        dgrad[(base + col, i)] += 2.0 * acc;
                    }
                }
            }
        }
    }

    // ---- measurement blocks
    for (k, xk) in x.iter().enumerate() {
        let gyro = ctx.problem.imu[k].gyro;
        for (j, ch) in ctx.steps[k].legs.iter().enumerate() {
            let (r_p, r_v) = assembly::meas_residuals(xk, ch, &gyro, j);
            let jp = assembly::meas_pos_jacobian(xk, j, n_f);
            let jv = assembly::meas_vel_jacobian(xk, ch, n_f);
            let omega_state = gyro - xk.gyro_bias;

            for (i, entry) in layout.entries().iter().enumerate() {
                match &entry.kind {
                    ThetaKind::Base { .. } => {}
                    ThetaKind::Cov { block, param } => {
                        let Some(off) = rz_offset(block) else { continue };
                        let d_block = cov.block(block).d_matrix_d_param(*param);
                        // position channel touches only the joint-angle block
                        if off == 0 {
                            let jac = ch.kin.jac;
                            let d_sigma_p = jac * d_block * jac.transpose();
                            let dw = -ch.pos_w * d_sigma_p * ch.pos_w;
                            add_small(&mut dgrad, k * d, i, &jp, &(dw * r_p));
                        }
                        if ch.vel_active {
                            let gsub = ch.gv.fixed_view::<3, 3>(0, off).clone_owned();
                            let d_sigma_v = gsub * d_block * gsub.transpose();
                            let dw = -ch.vel_w * d_sigma_v * ch.vel_w;
                            let rv = r_v.expect("active velocity channel");
                            add_small(&mut dgrad, k * d, i, &jv, &(dw * rv));
                        }
                    }
                    ThetaKind::Foot { leg, axis } => {
                        if *leg != j {
                            continue;
                        }
                        let c = *axis;
                        let dp = ch.kin.calf_rot.column(c).into_owned();
                        let d_jac = ch.kin.d_jac_d_theta(c);

                        // position channel: measured side and Sigma_p(theta)
                        let dr_p = -dp;
                        let d_sigma_p = d_jac * r_alpha * ch.kin.jac.transpose()
                            + ch.kin.jac * r_alpha * d_jac.transpose();
                        let dw_p = -ch.pos_w * d_sigma_p * ch.pos_w;
                        add_small(&mut dgrad, k * d, i, &jp, &(ch.pos_w * dr_p + dw_p * r_p));

                        if ch.vel_active {
                            let rv = r_v.expect("active velocity channel");
                            // measured side
                            let dr_v = -(d_jac * ch.rates) - omega_state.cross(&dp);
                            // state-Jacobian dependence: the gyro-bias block
                            let d_entry = -crate::manifold::skew(&dp);
                            let gyro_col = slice::gyro_bias(n_f);
                            // Sigma_v(theta) through G_v(theta)
                            let d_jac_dot = ch.kin.d_jac_dot_d_theta(c);
                            let mut dg = nalgebra::SMatrix::<f64, 3, 9>::zeros();
                            dg.fixed_view_mut::<3, 3>(0, 0).copy_from(
                                &(d_jac_dot + crate::manifold::skew(&ctx.steps[k].gyro_ref) * d_jac),
                            );
                            dg.fixed_view_mut::<3, 3>(0, 3).copy_from(&d_jac);
                            dg.fixed_view_mut::<3, 3>(0, 6).copy_from(&d_entry);
                            let d_sigma_v: Matrix3<f64> =
                                Matrix3::from(dg * rz * ch.gv.transpose())
                                    + Matrix3::from(ch.gv * rz * dg.transpose());
                            let dw_v = -ch.vel_w * d_sigma_v * ch.vel_w;

                            add_small(&mut dgrad, k * d, i, &jv, &(ch.vel_w * dr_v + dw_v * rv));
                            // (dJ/dtheta)^T W r term from the state Jacobian
                            let extra = 2.0 * d_entry.transpose() * ch.vel_w * rv;
                            for rr in 0..3 {
                                dgrad[(k * d + gyro_col + rr, i)] += extra[rr];
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(-dgrad)
}

/// `dgrad[base + slice, col] += 2 * A_s^T v` for each sparse entry.
fn add_small(
    dgrad: &mut DMatrix<f64>,
    base: usize,
    col: usize,
    entries: &[(usize, Matrix3<f64>)],
    v: &Vector3<f64>,
) {
    for (off, a) in entries {
        let contrib = 2.0 * a.transpose() * v;
        for rr in 0..3 {
            dgrad[(base + off + rr, col)] += contrib[rr];
        }
    }
}
