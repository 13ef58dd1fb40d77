use thiserror::Error;

/// Everything that can go wrong between reading a matrix pair and producing a verdict.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuasError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix {name} is not square ({rows}x{cols})")]
    NotSquare {
        name: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("matrix {name} is not symmetric (asymmetry {asymmetry:.3e})")]
    NotSymmetric { name: &'static str, asymmetry: f64 },

    #[error("Lyapunov candidate is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("B{index} fails the weak Lyapunov inequality: largest eigenvalue of B^T P + P B is {max_eigenvalue:.3e}")]
    NoCommonWeakLyapunov { index: usize, max_eigenvalue: f64 },

    #[error("B^T + B is not negative semidefinite (largest eigenvalue {max_eigenvalue:.3e})")]
    NotDissipative { max_eigenvalue: f64 },

    #[error("B{index} is not Hurwitz (spectral abscissa {abscissa:.3e})")]
    NotHurwitz { index: usize, abscissa: f64 },

    #[error("convex parameter {0} lies outside [0, 1]")]
    LambdaOutOfRange(f64),

    #[error("block structure violated: {0}")]
    StructureViolation(String),

    #[error("state lies in N = ker C0 ∩ ker C1, the killing parameter is not unique")]
    InNullSpace,

    #[error("state is not in the cone F")]
    NotInF,

    #[error("dimension of K is {0}, this classification needs dim K <= 2")]
    DimensionTooLarge(usize),

    #[error("norm increased by {increase:.3e} at t = {time}, above the integration bound {bound:.3e}; shrink dt")]
    StepTooLarge {
        time: f64,
        increase: f64,
        bound: f64,
    },

    #[error("trajectory carries no outputs")]
    NoOutputs,

    #[error("invalid switching signal: {0}")]
    BadSignalSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown example '{0}'")]
    UnknownExample(String),

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl GuasError {
    /// True for errors meaning the input violates a precondition of the
    /// requested operation (hypotheses on the pair, shapes, domains).
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            GuasError::NotHurwitz { .. }
                | GuasError::NoCommonWeakLyapunov { .. }
                | GuasError::NotPositiveDefinite { .. }
                | GuasError::NotSymmetric { .. }
                | GuasError::NotDissipative { .. }
                | GuasError::NotSquare { .. }
                | GuasError::DimensionMismatch(_)
                | GuasError::StructureViolation(_)
                | GuasError::StepTooLarge { .. }
                | GuasError::NotInF
                | GuasError::InNullSpace
                | GuasError::LambdaOutOfRange(_)
                | GuasError::DimensionTooLarge(_)
        )
    }
}

impl From<std::io::Error> for GuasError {
    fn from(e: std::io::Error) -> Self {
        GuasError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for GuasError {
    fn from(e: serde_json::Error) -> Self {
        GuasError::Parse(e.to_string())
    }
}

impl From<csv::Error> for GuasError {
    fn from(e: csv::Error) -> Self {
        GuasError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GuasError>;
