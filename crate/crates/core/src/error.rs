use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters or configuration.
    Usage,
    /// Malformed, missing or inconsistent input data.
    Data,
    /// A numerical routine could not proceed.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("joint projects onto the camera plane (|lambda| = {lambda:e})")]
    DegenerateProjection { lambda: f64 },

    #[error("camera matrix left 3x3 block is singular")]
    SingularCamera,

    #[error("covariance matrix is not symmetric positive definite")]
    SingularCovariance,

    #[error("innovation covariance is not invertible")]
    SingularInnovation,

    #[error("mixture component {component} collapsed twice during EM")]
    EmptyCluster { component: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no visible joints in measurement frame")]
    NoVisibleJoints,

    #[error("all importance weights are zero (filter diverged)")]
    AllWeightsZero,

    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("ground-truth limb {limb} has zero length")]
    ZeroLengthLimb { limb: String },

    #[error("point configuration is degenerate (collinear or coincident)")]
    DegenerateConfiguration,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("visible measurement of `{joint}` is not finite")]
    NonFiniteMeasurement { joint: String },

    #[error("unknown or missing joint `{0}`")]
    MissingJoint(String),

    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("frame {frame}, view {view}: {source}")]
    AtView {
        frame: usize,
        view: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_frame(self, frame: usize) -> Self {
        Error::AtFrame {
            frame,
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) => ErrorKind::Usage,
            Error::DegenerateProjection { .. }
            | Error::SingularCamera
            | Error::SingularCovariance
            | Error::SingularInnovation
            | Error::EmptyCluster { .. }
            | Error::AllWeightsZero
            | Error::DegenerateConfiguration => ErrorKind::Numerical,
            Error::AtFrame { source, .. } | Error::AtView { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
