use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong inside the estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix had the wrong length for the data it was combined with.
    DimensionMismatch { expected: usize, found: usize },
    /// A scalar argument or configuration value is outside its domain.
    InvalidArgument(String),
    /// Bernoulli responses must be exactly 0 or 1.
    LabelDomain { row: usize, value: f64 },
    /// Cholesky factorization hit a nonpositive pivot.
    NotPositiveDefinite { pivot: usize },
    /// An iterative solver used its whole budget without meeting its tolerance.
    ConvergenceFailure {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },
    /// Accelerated gradient descent kept increasing the objective.
    Divergence { iterations: usize },
    /// Fewer rows than machines.
    TooManyMachines { machines: usize, rows: usize },
    EmptyTestSet,
    /// A failure on one node machine.
    Node { machine: usize, source: Box<Error> },
    /// A failure at one outer iteration of a run.
    Iteration { iteration: usize, source: Box<Error> },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_node(self, machine: usize) -> Self {
        Error::Node {
            machine,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// Strips node/iteration annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Node { source, .. } | Error::Iteration { source, .. } => source.root(),
            e => e,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::LabelDomain { row, value } => {
                write!(f, "row {row}: Bernoulli label must be 0 or 1, got {value}")
            }
            Error::NotPositiveDefinite { pivot } => {
                write!(f, "matrix is not positive definite (pivot {pivot})")
            }
            Error::ConvergenceFailure {
                iterations,
                residual,
                ..
            } => write!(
                f,
                "solver did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::Divergence { iterations } => write!(
                f,
                "objective increased for {iterations} consecutive iterations; step size too large"
            ),
            Error::TooManyMachines { machines, rows } => {
                write!(f, "cannot split {rows} rows across {machines} machines")
            }
            Error::EmptyTestSet => write!(f, "test set is empty"),
            Error::Node { machine, source } => write!(f, "machine {machine}: {source}"),
            Error::Iteration { iteration, source } => write!(f, "iteration {iteration}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Node { source, .. } | Error::Iteration { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
