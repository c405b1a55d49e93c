use thiserror::Error;

pub type Result<T> = std::result::Result<T, FeatlabError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatlabError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("point outside the kernel domain: <x,x'>/d = {0}")]
    Domain(f64),

    #[error("degree {k} exceeds basis truncation k_max = {k_max}")]
    DegreeOutOfRange { k: usize, k_max: usize },

    #[error("quadrature did not converge: estimates {coarse} vs {fine}")]
    QuadratureNonConvergence { coarse: f64, fine: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("degenerate feature: every calibration value is zero")]
    DegenerateFeature,

    #[error("operation requires stage {expected}, network is at stage {found}")]
    WrongStage { expected: String, found: String },

    #[error("gradient descent diverged: {0}")]
    StepSize(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FeatlabError {
    fn from(e: std::io::Error) -> Self {
        FeatlabError::Io(e.to_string())
    }
}

impl From<csv::Error> for FeatlabError {
    fn from(e: csv::Error) -> Self {
        FeatlabError::Io(e.to_string())
    }
}
