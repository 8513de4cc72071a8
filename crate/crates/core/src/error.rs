use thiserror::Error;

/// Errors raised by the design, weighting, criteria and search layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: asymmetry {asymmetry:.3e} exceeds {tolerance:.3e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("symmetric eigen-solver did not converge on the {dim}x{dim} matrix {matrix}")]
    NumericalFailure { dim: usize, matrix: String },

    #[error("matrix is not nonnegative definite: eigenvalue {eigenvalue:.6e} is below -{cutoff:.3e}")]
    NotNonnegativeDefinite { eigenvalue: f64, cutoff: f64 },

    #[error("matrix is singular (numeric rank {rank} of {dim}); {hint}")]
    Singular {
        rank: usize,
        dim: usize,
        hint: &'static str,
    },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid estimation space: {0}")]
    InvalidSpace(String),

    #[error("invalid system of estimable functions: {0}")]
    InvalidSystem(String),

    #[error("invalid weight matrix: {0}")]
    InvalidWeight(String),

    #[error("column space leaves the estimation space (residual {residual:.3e}, allowed {allowed:.3e})")]
    OutsideEstimationSpace { residual: f64, allowed: f64 },

    #[error("target is not estimable under the design; offending columns (1-based): {columns:?}")]
    Infeasible { columns: Vec<usize> },

    #[error("design estimates a space of dimension {rank}, but the estimation space has dimension {expected}")]
    EstimationSpaceMismatch { rank: usize, expected: usize },

    #[error("weight of the zero vector is undefined")]
    ZeroVector,

    #[error("vector lies outside the column space of the weight matrix")]
    OutsideWeightSpan,

    #[error("weight matrices have non-nested column spaces")]
    ColumnSpaceMismatch,

    #[error("search space holds {size} assignments, above the enumeration limit of {limit}; use exchange search")]
    SearchSpaceTooLarge { size: u128, limit: u128 },

    #[error("no feasible starting design found in {0} random draws")]
    NoFeasibleStart(usize),

    #[error("unknown criterion {0:?}; expected D, A or E")]
    UnknownCriterion(String),

    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
