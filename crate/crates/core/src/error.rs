use thiserror::Error;

/// Errors raised by the subspace geometry, the adaptation pipeline and the
/// experiment front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix has numerical rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid subspace dimensions: k = {sub_dim}, d = {ambient_dim} (need 1 <= k <= d/2)")]
    InvalidSubspaceDim { sub_dim: usize, ambient_dim: usize },

    #[error("basis columns are not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("subspaces are at the cut locus (principal angle {angle:.6} rad), geodesic is not unique")]
    CutLocus { angle: f64 },

    #[error("matrix is not tangent at the base point (|base^T delta| = {residual:.3e})")]
    NotTangent { residual: f64 },

    #[error("iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("angle {angle} outside [0, pi/2)")]
    AngleOutOfRange { angle: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("quadrature node count must be odd and >= 3, got {0}")]
    BadNodeCount(usize),

    #[error("blend factor {0} outside [0, 1]")]
    BlendOutOfRange(f64),

    #[error("class {0} has no training samples")]
    EmptyClass(usize),

    #[error("empty list")]
    EmptyList,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: u64,
        column: usize,
        message: String,
    },

    #[error("label {label} at row {row} is out of range")]
    LabelOutOfRange { row: u64, label: String },

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input or usage).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::CutLocus { .. }
                | Error::NotTangent { .. }
                | Error::NoConvergence { .. }
                | Error::AngleOutOfRange { .. }
        )
    }

    /// Process exit code used by the command line front end:
    /// 1 usage error, 2 data error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::BadParameter(_)
            | Error::BadNodeCount(_)
            | Error::BlendOutOfRange(_)
            | Error::InvalidSubspaceDim { .. } => 1,
            Error::Parse { .. }
            | Error::LabelOutOfRange { .. }
            | Error::EmptyClass(_)
            | Error::EmptyList
            | Error::Io(_)
            | Error::Json(_)
            | Error::DimensionMismatch { .. }
            | Error::LengthMismatch { .. }
            | Error::NotOrthonormal { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
