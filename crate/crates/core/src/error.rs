use thiserror::Error;

/// Errors produced anywhere in the simulator core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("degree {degree} exceeds the supported maximum {max}")]
    DegreeTooHigh { degree: usize, max: usize },

    #[error("degree {degree} out of range for a table of maximum degree {max}")]
    DegreeOutOfRange { degree: usize, max: usize },

    #[error("basis index {index} out of range 1..={count}")]
    BasisIndexOutOfRange { index: usize, count: usize },

    #[error("point {value} outside the support of parameter {dim}")]
    OutsideSupport { dim: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid quadrature request: {0}")]
    Quadrature(String),

    #[error("netlist line {line}, column {col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },

    #[error("netlist line {line}: undeclared random variable `{name}`")]
    UndeclaredVariable { line: usize, name: String },

    #[error("netlist line {line}: unknown node `{name}`")]
    UnknownNode { line: usize, name: String },

    #[error("netlist line {line}: duplicate device name `{name}`")]
    DuplicateDevice { line: usize, name: String },

    #[error("netlist: {0}")]
    Netlist(String),

    #[error("device {device}: parameter `{param}` evaluates to invalid value {value}")]
    InvalidParameter {
        device: String,
        param: String,
        value: f64,
    },

    #[error("singular Jacobian at unknown {unknown} (floating node or inconsistent sources?)")]
    SingularMatrix { unknown: String },

    #[error("Newton failed to converge after {iterations} iterations (best residual {best_residual:.3e})")]
    NoConvergence {
        iterations: usize,
        best_residual: f64,
    },

    #[error("time step {step:.3e} fell below the minimum {h_min:.3e} at t = {time:.6e}")]
    StepUnderflow { time: f64, step: f64, h_min: f64 },

    #[error("testing-point selection accepted only {accepted} of {required} points; lower beta or use a richer candidate rule")]
    TestingSelection { accepted: usize, required: usize },

    #[error("{engine} failed at parameter point {point}: {source}")]
    PointFailure {
        engine: &'static str,
        point: usize,
        xi: Vec<f64>,
        source: Box<Error>,
    },

    #[error("Monte Carlo: {failed} of {total} samples failed (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("shooting: {0}")]
    Shooting(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),
}

impl Error {
    /// True for errors caused by malformed input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidDistribution(_)
                | Error::DegreeTooHigh { .. }
                | Error::DegreeOutOfRange { .. }
                | Error::BasisIndexOutOfRange { .. }
                | Error::OutsideSupport { .. }
                | Error::DimensionMismatch { .. }
                | Error::Quadrature(_)
                | Error::Syntax { .. }
                | Error::UndeclaredVariable { .. }
                | Error::UnknownNode { .. }
                | Error::DuplicateDevice { .. }
                | Error::Netlist(_)
                | Error::InvalidOption(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
