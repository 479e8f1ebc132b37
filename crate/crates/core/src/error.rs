use thiserror::Error;

use crate::expr::EvalError;
use crate::verify::CheckResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {position}: expected {expected}, found {found}")]
    Syntax {
        position: usize,
        expected: String,
        found: String,
    },

    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),

    #[error("invalid coordinate system: {0}")]
    InvalidCoordinates(String),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("sum of terms with unequal degrees ({left} and {right})")]
    DegreeMixture { left: String, right: String },

    #[error("volume form vanishes or is undefined at {point:?} (|coefficient| = {value:e})")]
    NotAVolume { point: Vec<f64>, value: f64 },

    #[error("dual frame is singular at {point:?}: det(Gram) = {value:e}")]
    SingularFrame { point: Vec<f64>, value: f64 },

    #[error("generators are rank deficient at {point:?}")]
    RankDeficient { point: Vec<f64> },

    #[error("symplectic form is degenerate at {point:?}: det = {value:e}")]
    SingularSymplectic { point: Vec<f64>, value: f64 },

    #[error("constraint matrix is singular at {point:?}: det = {value:e}")]
    SingularDelta { point: Vec<f64>, value: f64 },

    #[error("verification `{}` failed: residual {:e}", .0.name, .0.max_abs_residual)]
    VerificationFailed(Box<CheckResult>),

    #[error("Jacobi identity fails: residual {:e}", .0.max_abs_residual)]
    JacobiFailed(Box<CheckResult>),

    #[error("leaf dimension m - k = {0} is odd")]
    OddLeafDimension(usize),

    #[error("invalid sampling request: {0}")]
    InvalidSampling(String),
}
