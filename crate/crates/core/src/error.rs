use thiserror::Error;

/// Errors raised while building or validating curvature tensors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("dimension {0} is outside the supported range 4..={max}", max = crate::tensor::MAX_DIM)]
    DimensionOutOfRange(usize),
    #[error("index ({i}, {j}, {k}, {l}) is out of range for dimension {n}")]
    IndexOutOfRange {
        n: usize,
        i: usize,
        j: usize,
        k: usize,
        l: usize,
    },
    #[error("entries force contradictory values for component ({i}, {j}, {k}, {l}): {first} vs {second}")]
    SymmetryConflict {
        i: usize,
        j: usize,
        k: usize,
        l: usize,
        first: f64,
        second: f64,
    },
    #[error("first Bianchi identity violated: residual {residual:e} exceeds bound {bound:e}")]
    BianchiViolation { residual: f64, bound: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("non-finite component value")]
    NonFinite,
}

/// Errors raised by frame functionals and cone certification.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConeError {
    #[error("frame is not orthonormal (Gram deviation {0:e})")]
    NonOrthonormalFrame(f64),
    #[error("frame dimension {frame} does not match tensor dimension {tensor}")]
    FrameDimMismatch { frame: usize, tensor: usize },
    #[error("tensor is not in the interior of the cone (margin {0:e})")]
    NotInterior(f64),
    #[error("tensor is not on the cone boundary (margin {margin:e}, tolerance {tolerance:e})")]
    NotOnBoundary { margin: f64, tolerance: f64 },
    #[error(
        "the identity direction cannot move this tensor across the cone boundary (slope {0:e})"
    )]
    UnreachableBoundary(f64),
}

/// Errors raised by the Hamilton ODE integrator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("solution blew up at t = {t}: norm {norm:e} exceeds cap {cap:e}")]
    BlowUp { t: f64, norm: f64, cap: f64 },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("scalar curvature vanishes")]
    ZeroScal,
    #[error("invalid flow options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Errors raised by samplers and verification campaigns.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("sampler could not reach the requested region after {attempts} attempts")]
    SamplerStall { attempts: usize },
    #[error("invalid campaign configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Errors raised while reading the JSON interchange formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
