//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// SE(3)/SO(3) logarithm requested within `1e-6` of the π branch cut.
    #[error("rotation angle {angle} is within 1e-6 of pi; log map undefined")]
    AngleNearPi { angle: f64 },

    /// A matrix that must be positive definite failed its Cholesky test.
    #[error("matrix not positive definite ({context})")]
    NotPd { context: String },

    /// Block-tridiagonal factorization failed even after regularization.
    #[error("KKT system not factorizable (lambda = {lambda:.3e})")]
    NotFactorizable { lambda: f64 },

    /// A calibration parameter left its box bounds.
    #[error("parameter '{name}' = {value} outside box [{lo}, {hi}]")]
    BoxViolation {
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// Inverse kinematics target unreachable for the leg geometry.
    #[error("IK target out of range for leg {leg}: {detail}")]
    IkOutOfRange { leg: usize, detail: String },

    /// Trajectory/ground-truth length mismatch.
    #[error("length mismatch: {left} vs {right} ({context})")]
    LengthMismatch {
        left: usize,
        right: usize,
        context: String,
    },

    /// Armijo backtracking used up its halving budget.
    #[error("line search exhausted after {tries} halvings")]
    LineSearchExhausted { tries: usize },

    /// File carries an unsupported schema version.
    #[error("schema version mismatch: found '{found}', expected '{expected}'")]
    SchemaVersionMismatch { found: String, expected: String },

    /// A record in a data file failed to parse.
    #[error("malformed record at line {line}: {detail}")]
    MalformedRecord { line: usize, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
