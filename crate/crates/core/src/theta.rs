//! The flattened calibration decision vector and its frozen ordering.
//!
//! Order: covariance blocks in the `Q_w` block-diagonal order
//! (`q_pos, q_vel, q_rot, q_foot, q_accel_bias, q_gyro_bias`), then the
//! encoder blocks (`r_joint, r_joint_rate`), then the per-leg foot offsets
//! (leg-major, xyz), then the base-to-mocap offset. The prior covariance is
//! configuration, not a decision variable.
//!
//! Gradients, bounds, trace columns and parameter files all use this
//! ordering; a hash of the layout descriptor guards file loads.

use nalgebra::DVector;

use crate::robot::{CovarianceSpec, KinematicOffsets, CALIBRATED_BLOCKS};

/// What one scalar component of theta controls.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaKind {
    /// Parameter `param` of the named covariance block.
    Cov { block: &'static str, param: usize },
    /// Component `axis` of leg `leg`'s calf-frame contact offset.
    Foot { leg: usize, axis: usize },
    /// Component `axis` of the body-to-mocap offset.
    Base { axis: usize },
}

#[derive(Debug, Clone)]
pub struct ThetaEntry {
    pub kind: ThetaKind,
    pub name: String,
}

/// Frozen component layout of the decision vector for a given covariance
/// template (diagonal vs full blocks) and leg count.
#[derive(Debug, Clone)]
pub struct ThetaLayout {
    entries: Vec<ThetaEntry>,
    n_f: usize,
}

impl ThetaLayout {
    pub fn new(template: &CovarianceSpec, n_f: usize) -> Self {
        let mut entries = Vec::new();
        for block in CALIBRATED_BLOCKS {
            let count = template.block(block).param_count();
            for param in 0..count {
                entries.push(ThetaEntry {
                    kind: ThetaKind::Cov { block, param },
                    name: format!("{block}[{param}]"),
                });
            }
        }
        for leg in 0..n_f {
            for axis in 0..3 {
                entries.push(ThetaEntry {
                    kind: ThetaKind::Foot { leg, axis },
                    name: format!("foot{leg}[{}]", ["x", "y", "z"][axis]),
                });
            }
        }
        for axis in 0..3 {
            entries.push(ThetaEntry {
                kind: ThetaKind::Base { axis },
                name: format!("base[{}]", ["x", "y", "z"][axis]),
            });
        }
        ThetaLayout { entries, n_f }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn entries(&self) -> &[ThetaEntry] {
        &self.entries
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    /// Canonical descriptor string; hashed into parameter files.
    pub fn describe(&self) -> String {
        let mut s = format!("theta-layout v1; n_f={};", self.n_f);
        for e in &self.entries {
            s.push_str(&e.name);
            s.push(';');
        }
        s
    }

    /// FNV-1a hash of the descriptor.
    pub fn schema_hash(&self) -> u64 {
        fnv1a(self.describe().as_bytes())
    }

    pub fn pack(&self, cov: &CovarianceSpec, offsets: &KinematicOffsets) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        for (i, e) in self.entries.iter().enumerate() {
            out[i] = match &e.kind {
                ThetaKind::Cov { block, param } => cov.block(block).params()[*param],
                ThetaKind::Foot { leg, axis } => offsets.foot[*leg][*axis],
                ThetaKind::Base { axis } => offsets.base[*axis],
            };
        }
        out
    }

    /// Write theta values onto a clone of the template spec/offsets.
    pub fn unpack(
        &self,
        theta: &DVector<f64>,
        template: &CovarianceSpec,
    ) -> (CovarianceSpec, KinematicOffsets) {
        assert_eq!(theta.len(), self.len(), "theta length mismatch");
        let mut cov = template.clone();
        let mut offsets = KinematicOffsets::zero(self.n_f);
        for block in CALIBRATED_BLOCKS {
            let mut params = cov.block(block).params();
            for (i, e) in self.entries.iter().enumerate() {
                if let ThetaKind::Cov { block: b, param } = &e.kind {
                    if *b == block {
                        params[*param] = theta[i];
                    }
                }
            }
            cov.block_mut(block).set_params(&params);
        }
        for (i, e) in self.entries.iter().enumerate() {
            match &e.kind {
                ThetaKind::Foot { leg, axis } => offsets.foot[*leg][*axis] = theta[i],
                ThetaKind::Base { axis } => offsets.base[*axis] = theta[i],
                ThetaKind::Cov { .. } => {}
            }
        }
        (cov, offsets)
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::{CovBlock, PriorCov};
    use nalgebra::Vector3;

    fn spec() -> CovarianceSpec {
        CovarianceSpec {
            q_pos: CovBlock::iso(1e-8),
            q_vel: CovBlock::iso(1e-4),
            q_rot: CovBlock::iso(1e-6),
            q_foot: CovBlock::iso(1e-9),
            q_accel_bias: CovBlock::iso(1e-8),
            q_gyro_bias: CovBlock::iso(1e-8),
            r_joint: CovBlock::iso(1e-6),
            r_joint_rate: CovBlock::iso(1e-4),
            prior: PriorCov::iso(1e-4, 1e-4, 1e-2, 1e-2, 1e-4, 1e-4),
        }
    }

    #[test]
    fn layout_dimension_diagonal_mode() {
        let layout = ThetaLayout::new(&spec(), 4);
        assert_eq!(layout.len(), 8 * 3 + 4 * 3 + 3);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let layout = ThetaLayout::new(&spec(), 4);
        let mut offsets = KinematicOffsets::zero(4);
        offsets.foot[2] = Vector3::new(0.01, -0.005, 0.02);
        offsets.base = Vector3::new(0.05, 0.02, 0.03);
        let theta = layout.pack(&spec(), &offsets);
        let (cov2, off2) = layout.unpack(&theta, &spec());
        assert_eq!(layout.pack(&cov2, &off2), theta);
        assert_eq!(off2.foot[2], offsets.foot[2]);
        assert_eq!(off2.base, offsets.base);
    }

    #[test]
    fn schema_hash_tracks_mode() {
        let diag = ThetaLayout::new(&spec(), 4);
        let mut full = spec();
        full.q_rot = CovBlock::Chol([1e-3, 0.0, 1e-3, 0.0, 0.0, 1e-3]);
        let full_layout = ThetaLayout::new(&full, 4);
        assert_ne!(diag.schema_hash(), full_layout.schema_hash());
        assert_eq!(full_layout.len(), diag.len() + 3);
    }
}
