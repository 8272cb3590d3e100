//! Block-tridiagonal symmetric positive-definite solver (block Thomas
//! algorithm / block Cholesky): factor once, back-substitute per
//! right-hand side.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric block-tridiagonal matrix: diagonal blocks `D_k` and upper
/// off-diagonal blocks `U_k = H(k, k+1)`; the lower blocks are implied.
#[derive(Debug, Clone)]
pub struct BlockTridiag {
    pub dim: usize,
    pub diag: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
}

impl BlockTridiag {
    pub fn zeros(dim: usize, blocks: usize) -> Self {
        BlockTridiag {
            dim,
            diag: vec![DMatrix::zeros(dim, dim); blocks],
            upper: vec![DMatrix::zeros(dim, dim); blocks.saturating_sub(1)],
        }
    }

    pub fn blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dim * self.blocks()
    }

    /// Add `lambda` to the diagonal (Levenberg regularization).
    pub fn add_diagonal(&self, lambda: f64) -> BlockTridiag {
        let mut out = self.clone();
        for d in &mut out.diag {
            for i in 0..self.dim {
                d[(i, i)] += lambda;
            }
        }
        out
    }

    /// Assemble the full dense matrix; test/debug helper for small systems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.total_dim();
        let mut m = DMatrix::zeros(n, n);
        for (k, d) in self.diag.iter().enumerate() {
            m.view_mut((k * self.dim, k * self.dim), (self.dim, self.dim)).copy_from(d);
        }
        for (k, u) in self.upper.iter().enumerate() {
            m.view_mut((k * self.dim, (k + 1) * self.dim), (self.dim, self.dim)).copy_from(u);
            m.view_mut(((k + 1) * self.dim, k * self.dim), (self.dim, self.dim))
                .copy_from(&u.transpose());
        }
        m
    }
}

/// Cholesky-like factorization `H = L L^T` with block-bidiagonal `L`.
#[derive(Debug)]
pub struct BlockTridiagChol {
    dim: usize,
    /// Cholesky factors of the Schur-complemented diagonal blocks.
    diag_chol: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    /// Sub-diagonal blocks `B_k = U_{k-1}^T Lambda_{k-1}^{-T}`.
    sub: Vec<DMatrix<f64>>,
}

impl BlockTridiagChol {
    /// Factor the matrix; fails with `NotFactorizable` if any Schur block
    /// loses positive definiteness.
    pub fn factor(h: &BlockTridiag) -> Result<Self> {
        let dim = h.dim;
        let n = h.blocks();
        let mut diag_chol = Vec::with_capacity(n);
        let mut sub = Vec::with_capacity(n.saturating_sub(1));
        let mut schur = h.diag[0].clone();
        for k in 0..n {
            let chol = schur
                .clone()
                .cholesky()
                .ok_or(Error::NotFactorizable { lambda: 0.0 })?;
            if k + 1 < n {
                // B_{k+1} = U_k^T Lambda_k^{-T}: solve Lambda_k Y = U_k, B = Y^T
                let y = chol
                    .l()
                    .solve_lower_triangular(&h.upper[k])
                    .ok_or(Error::NotFactorizable { lambda: 0.0 })?;
                let b = y.transpose();
                schur = &h.diag[k + 1] - &b * b.transpose();
                sub.push(b);
            }
            diag_chol.push(chol);
        }
        Ok(BlockTridiagChol { dim, diag_chol, sub })
    }

    pub fn blocks(&self) -> usize {
        self.diag_chol.len()
    }

    /// Solve `H x = rhs` in place for one vector.
    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.blocks();
        let d = self.dim;
        // forward: L z = rhs with L block rows [B_k, Lambda_k]
        let mut z = DVector::zeros(n * d);
        for k in 0..n {
            let mut seg = rhs.rows(k * d, d).clone_owned();
            if k > 0 {
                seg -= &self.sub[k - 1] * z.rows((k - 1) * d, d);
            }
            let sol = self.diag_chol[k]
                .l()
                .solve_lower_triangular(&seg)
                .expect("lower-triangular solve");
            z.rows_mut(k * d, d).copy_from(&sol);
        }
        // backward: L^T x = z
        let mut x = DVector::zeros(n * d);
        for k in (0..n).rev() {
            let mut seg = z.rows(k * d, d).clone_owned();
            if k + 1 < n {
                seg -= self.sub[k].transpose() * x.rows((k + 1) * d, d);
            }
            let sol = self.diag_chol[k]
                .l()
                .transpose()
                .solve_upper_triangular(&seg)
                .expect("upper-triangular solve");
            x.rows_mut(k * d, d).copy_from(&sol);
        }
        x
    }

    /// Solve `H X = RHS` column by column against the single factorization.
    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for c in 0..rhs.ncols() {
            let col = DVector::from_column_slice(rhs.column(c).as_slice());
            out.set_column(c, &self.solve_vec(&col));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_spd_tridiag(rng: &mut StdRng, dim: usize, blocks: usize) -> BlockTridiag {
        let mut h = BlockTridiag::zeros(dim, blocks);
        for k in 0..blocks {
            let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
            h.diag[k] = &a * a.transpose() + DMatrix::identity(dim, dim) * (dim as f64 * 2.0);
        }
        for k in 0..blocks - 1 {
            h.upper[k] = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-0.3..0.3));
        }
        h
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = StdRng::seed_from_u64(41);
        for &(dim, blocks) in &[(3usize, 4usize), (5, 7), (9, 3)] {
            let h = random_spd_tridiag(&mut rng, dim, blocks);
            let chol = BlockTridiagChol::factor(&h).unwrap();
            let rhs = DVector::from_fn(dim * blocks, |_, _| rng.random_range(-1.0f64..1.0));
            let x = chol.solve_vec(&rhs);
            let dense = h.to_dense();
            let x_dense = dense.lu().solve(&rhs).unwrap();
            assert!((x - x_dense).amax() < 1e-10);
        }
    }

    #[test]
    fn multi_rhs_matches_vector_solves() {
        let mut rng = StdRng::seed_from_u64(42);
        let h = random_spd_tridiag(&mut rng, 4, 5);
        let chol = BlockTridiagChol::factor(&h).unwrap();
        let rhs = DMatrix::from_fn(20, 3, |_, _| rng.random_range(-1.0f64..1.0));
        let xs = chol.solve_matrix(&rhs);
        for c in 0..3 {
            let col = DVector::from_column_slice(rhs.column(c).as_slice());
            assert!((xs.column(c) - chol.solve_vec(&col)).amax() < 1e-14);
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let mut h = BlockTridiag::zeros(2, 2);
        h.diag[0] = DMatrix::identity(2, 2);
        h.diag[1] = -DMatrix::identity(2, 2);
        assert!(BlockTridiagChol::factor(&h).is_err());
    }
}
