use thiserror::Error;

pub type Result<T> = std::result::Result<T, BoundError>;

/// Everything that can go wrong while building models or computing bounds.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// The time grid does not carry a point the model needs (an atom, a hazard break).
    #[error("grid does not cover the model: {0}")]
    Structural(String),

    /// A conditional expectation was requested on an event of probability zero.
    #[error("no probability mass to condition on: {0}")]
    NumericSupport(String),

    #[error("singular linear system (pivot {pivot:.3e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("ill-conditioned linear system: condition estimate {condition:.3e} exceeds ceiling {ceiling:.3e}")]
    IllConditioned { condition: f64, ceiling: f64 },

    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("empty dataset")]
    EmptyDataset,
}

impl BoundError {
    /// True for failures of the numerics, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            BoundError::NumericSupport(_)
                | BoundError::Singular { .. }
                | BoundError::IllConditioned { .. }
                | BoundError::NoConvergence { .. }
                | BoundError::RootFinding(_)
        )
    }
}
