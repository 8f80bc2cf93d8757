use thiserror::Error;

/// Errors raised by the simulator, the estimation pipelines and the classical model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("value {value} lies outside the open interval (-1, 1)")]
    Domain { value: f64 },

    #[error("value {value} at row {row}, column {col} lies outside the open interval (-1, 1)")]
    DomainAt { row: usize, col: usize, value: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("layout needs {qubits} qubits but the cap is {cap}")]
    Resource { qubits: usize, cap: usize },

    #[error("layout mismatch: {0}")]
    Layout(String),

    #[error("permutation is not a bijection on basis labels")]
    NotBijective,

    #[error("postselection impossible: outcome probability {probability:e} is below 1e-14")]
    PostselectionImpossible { probability: f64 },

    #[error("data oracle queried at index {index} but the dataset has only {rows} rows")]
    DataAccess { index: usize, rows: usize },

    #[error("gate-level comparator supports widths up to {max}, got {width}")]
    UnsupportedWidth { width: usize, max: usize },

    #[error("sign test needs unbounded shots: amplitude floors must be positive")]
    UnboundedShots,

    #[error(
        "covariance is singular or not positive definite (eigenvalue {eigenvalue:e} along direction {direction:?})"
    )]
    SingularCovariance { eigenvalue: f64, direction: Vec<f64> },

    #[error("error bound precondition violated: D*||C^-1||*||dC|| = {value} exceeds 1/2")]
    BoundInvalid { value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
