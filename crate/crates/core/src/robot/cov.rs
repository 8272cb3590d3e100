//! Covariance blocks, their Cholesky/diagonal parameterizations, the
//! proprioceptive noise stack `R_z` and the first-order noise mapping
//! `G_p, G_v` with the induced world-frame measurement covariances.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};

use super::leg::LegKin;

/// Additive floor applied to induced measurement covariances.
pub const PD_FLOOR: f64 = 1e-12;

/// A 3x3 covariance block stored through a positive parameterization.
#[derive(Debug, Clone, PartialEq)]
pub enum CovBlock {
    /// Diagonal block: the three variances, stored directly.
    Diag(Vector3<f64>),
    /// Full block: lower-triangular Cholesky entries
    /// `(l11, l21, l22, l31, l32, l33)` with positive diagonal.
    Chol([f64; 6]),
}

impl CovBlock {
    pub fn iso(var: f64) -> Self {
        CovBlock::Diag(Vector3::new(var, var, var))
    }

    pub fn param_count(&self) -> usize {
        match self {
            CovBlock::Diag(_) => 3,
            CovBlock::Chol(_) => 6,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            CovBlock::Diag(d) => vec![d.x, d.y, d.z],
            CovBlock::Chol(l) => l.to_vec(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        match self {
            CovBlock::Diag(d) => {
                d.x = p[0];
                d.y = p[1];
                d.z = p[2];
            }
            CovBlock::Chol(l) => l.copy_from_slice(p),
        }
    }

    fn chol_matrix(l: &[f64; 6]) -> Matrix3<f64> {
        Matrix3::new(l[0], 0.0, 0.0, l[1], l[2], 0.0, l[3], l[4], l[5])
    }

    /// The assembled covariance `Sigma = L L^T` (or `diag` in diagonal mode).
    pub fn matrix(&self) -> Matrix3<f64> {
        match self {
            CovBlock::Diag(d) => Matrix3::from_diagonal(d),
            CovBlock::Chol(l) => {
                let lm = Self::chol_matrix(l);
                lm * lm.transpose()
            }
        }
    }

    /// `d Sigma / d param_i`.
    pub fn d_matrix_d_param(&self, i: usize) -> Matrix3<f64> {
        match self {
            CovBlock::Diag(_) => {
                let mut m = Matrix3::zeros();
                m[(i, i)] = 1.0;
                m
            }
            CovBlock::Chol(l) => {
                let lm = Self::chol_matrix(l);
                let (row, col) = [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)][i];
                let mut e = Matrix3::zeros();
                e[(row, col)] = 1.0;
                e * lm.transpose() + lm * e.transpose()
            }
        }
    }

    /// Fails unless the assembled block is positive definite.
    pub fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            CovBlock::Diag(d) => d.iter().all(|&v| v > 0.0),
            CovBlock::Chol(l) => l[0] > 0.0 && l[2] > 0.0 && l[5] > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NotPd { context: name.to_string() })
        }
    }
}

/// Prior covariance on the first state, one block per state slice. The foot
/// block is shared across legs.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorCov {
    pub rot: CovBlock,
    pub pos: CovBlock,
    pub vel: CovBlock,
    pub foot: CovBlock,
    pub accel_bias: CovBlock,
    pub gyro_bias: CovBlock,
}

impl PriorCov {
    pub fn iso(rot: f64, pos: f64, vel: f64, foot: f64, ba: f64, bw: f64) -> Self {
        PriorCov {
            rot: CovBlock::iso(rot),
            pos: CovBlock::iso(pos),
            vel: CovBlock::iso(vel),
            foot: CovBlock::iso(foot),
            accel_bias: CovBlock::iso(ba),
            gyro_bias: CovBlock::iso(bw),
        }
    }
}

/// Cholesky-parameterized covariance description: process blocks in the
/// `Q_w` block-diagonal order, encoder blocks, and the prior.
///
/// `q_rot` doubles as the gyroscope white-noise covariance inside the
/// proprioceptive stack `R_z`; `q_vel` is the accelerometer white-noise
/// covariance driving the velocity row.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    pub q_pos: CovBlock,
    pub q_vel: CovBlock,
    pub q_rot: CovBlock,
    pub q_foot: CovBlock,
    pub q_accel_bias: CovBlock,
    pub q_gyro_bias: CovBlock,
    pub r_joint: CovBlock,
    pub r_joint_rate: CovBlock,
    pub prior: PriorCov,
}

/// Names and accessors of the calibratable blocks, in the frozen order.
pub const CALIBRATED_BLOCKS: [&str; 8] = [
    "q_pos", "q_vel", "q_rot", "q_foot", "q_accel_bias", "q_gyro_bias", "r_joint", "r_joint_rate",
];

impl CovarianceSpec {
    pub fn block(&self, name: &str) -> &CovBlock {
        match name {
            "q_pos" => &self.q_pos,
            "q_vel" => &self.q_vel,
            "q_rot" => &self.q_rot,
            "q_foot" => &self.q_foot,
            "q_accel_bias" => &self.q_accel_bias,
            "q_gyro_bias" => &self.q_gyro_bias,
            "r_joint" => &self.r_joint,
            "r_joint_rate" => &self.r_joint_rate,
            other => panic!("unknown covariance block '{other}'"),
        }
    }

    pub fn block_mut(&mut self, name: &str) -> &mut CovBlock {
        match name {
            "q_pos" => &mut self.q_pos,
            "q_vel" => &mut self.q_vel,
            "q_rot" => &mut self.q_rot,
            "q_foot" => &mut self.q_foot,
            "q_accel_bias" => &mut self.q_accel_bias,
            "q_gyro_bias" => &mut self.q_gyro_bias,
            "r_joint" => &mut self.r_joint,
            "r_joint_rate" => &mut self.r_joint_rate,
            other => panic!("unknown covariance block '{other}'"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for name in CALIBRATED_BLOCKS {
            self.block(name).validate(name)?;
        }
        Ok(())
    }
}

/// Discrete per-step process noise blocks.
///
/// Scaling by the sampling period: the random-walk blocks (position, feet,
/// biases) scale by `dt`; the IMU-driven rows scale by `dt^2` because white
/// accelerometer/gyro noise enters the state through one explicit `dt`
/// factor in the propagation. This keeps `q_rot` consistent between its two
/// roles (process rotation row and gyro term of `R_z`).
#[derive(Debug, Clone)]
pub struct ProcessNoise {
    pub rot: Matrix3<f64>,
    pub pos: Matrix3<f64>,
    pub vel: Matrix3<f64>,
    pub foot: Matrix3<f64>,
    pub accel_bias: Matrix3<f64>,
    pub gyro_bias: Matrix3<f64>,
}

pub fn assemble_process_cov(cov: &CovarianceSpec, dt: f64) -> Result<ProcessNoise> {
    cov.validate()?;
    Ok(ProcessNoise {
        rot: cov.q_rot.matrix() * (dt * dt),
        pos: cov.q_pos.matrix() * dt,
        vel: cov.q_vel.matrix() * (dt * dt),
        foot: cov.q_foot.matrix() * dt,
        accel_bias: cov.q_accel_bias.matrix() * dt,
        gyro_bias: cov.q_gyro_bias.matrix() * dt,
    })
}

/// Prior covariance blocks in state-slice order.
#[derive(Debug, Clone)]
pub struct PriorNoise {
    pub rot: Matrix3<f64>,
    pub pos: Matrix3<f64>,
    pub vel: Matrix3<f64>,
    pub foot: Matrix3<f64>,
    pub accel_bias: Matrix3<f64>,
    pub gyro_bias: Matrix3<f64>,
}

pub fn assemble_prior_cov(cov: &CovarianceSpec) -> PriorNoise {
    PriorNoise {
        rot: cov.prior.rot.matrix(),
        pos: cov.prior.pos.matrix(),
        vel: cov.prior.vel.matrix(),
        foot: cov.prior.foot.matrix(),
        accel_bias: cov.prior.accel_bias.matrix(),
        gyro_bias: cov.prior.gyro_bias.matrix(),
    }
}

/// Proprioceptive noise stack `R_z = blkdiag(R_alpha, R_alphadot, Q_omega)`.
pub fn r_z(cov: &CovarianceSpec) -> SMatrix<f64, 9, 9> {
    let mut m = SMatrix::<f64, 9, 9>::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&cov.r_joint.matrix());
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&cov.r_joint_rate.matrix());
    m.fixed_view_mut::<3, 3>(6, 6).copy_from(&cov.q_rot.matrix());
    m
}

/// First-order mapping from proprioceptive noise `(d_alpha, d_alphadot,
/// d_omega)` to the foot position/velocity channels.
///
/// Rows as printed in the measurement model:
/// `G_p = [J 0 0]`, `G_v = [Jdot + skew(omega) J,  J,  -skew(fk)]`.
pub fn noise_mapping(kin: &LegKin, omega: &Vector3<f64>) -> (SMatrix<f64, 3, 9>, SMatrix<f64, 3, 9>) {
    let mut gp = SMatrix::<f64, 3, 9>::zeros();
    gp.fixed_view_mut::<3, 3>(0, 0).copy_from(&kin.jac);

    let mut gv = SMatrix::<f64, 3, 9>::zeros();
    gv.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(kin.jac_dot + crate::manifold::skew(omega) * kin.jac));
    gv.fixed_view_mut::<3, 3>(0, 3).copy_from(&kin.jac);
    gv.fixed_view_mut::<3, 3>(0, 6).copy_from(&(-crate::manifold::skew(&kin.fk)));
    (gp, gv)
}

/// Induced measurement covariances rotated to the world frame, with a PD
/// floor. Fails if symmetrization leaves an eigenvalue below the floor.
pub fn induced_measurement_cov(
    gp: &SMatrix<f64, 3, 9>,
    gv: &SMatrix<f64, 3, 9>,
    rz: &SMatrix<f64, 9, 9>,
    r_wb: &Matrix3<f64>,
) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    let mut out = [Matrix3::zeros(), Matrix3::zeros()];
    for (slot, g) in [(0, gp), (1, gv)] {
        let body: Matrix3<f64> = (g * rz * g.transpose()).into();
        let world = r_wb * body * r_wb.transpose();
        let sym = (world + world.transpose()) * 0.5 + Matrix3::identity() * PD_FLOOR;
        let eig = sym.symmetric_eigen();
        if eig.eigenvalues.min() < 0.0 {
            return Err(Error::NotPd {
                context: format!("induced measurement covariance (channel {slot})"),
            });
        }
        out[slot] = sym;
    }
    Ok((out[0], out[1]))
}
