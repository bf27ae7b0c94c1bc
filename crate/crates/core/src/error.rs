use thiserror::Error;

/// Errors raised while building meshes, kernels and time-stepping.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{name} must be positive: value {value:e} at x = {x}")]
    Positivity { name: &'static str, x: f64, value: f64 },
    #[error("tail condition violated: {0}")]
    Tail(String),
    #[error("stencil index {index} out of range {lo}..={hi}")]
    Stencil { index: usize, lo: usize, hi: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("grid function does not vanish at x_0 (value {0:e})")]
    NotInH0(f64),
    #[error("kernel too short: need {need} coefficients, have {have}")]
    KernelLength { need: usize, have: usize },
    #[error("zero pivot in tridiagonal elimination at row {row} (pivot {pivot:e})")]
    ZeroPivot { row: usize, pivot: f64 },
    #[error("contour crosses a branch cut at radius {radius}")]
    BranchCut { radius: f64 },
    #[error("far-boundary contamination: doubling check differs by {diff:e} (tolerance {tol:e})")]
    Contamination { diff: f64, tol: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics themselves, as opposed to rejected input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroPivot { .. } | Error::BranchCut { .. } | Error::Contamination { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
