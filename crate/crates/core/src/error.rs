use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Invalid argument supplied by the caller (non-finite value, bad dimension, bad tolerance).
    #[error("input error: {0}")]
    Input(String),

    /// Model data violates a structural requirement (non-SPD spring, no 6-d.o.f. spring, ...).
    #[error("model error: {0}")]
    Model(String),

    /// A numerical self-check failed beyond its tolerance.
    #[error("numerical consistency error: {0}")]
    NumericalConsistency(String),

    /// Inverse kinematics did not converge.
    #[error("target unreachable or outside the solution branch: {0}")]
    Unreachable(String),

    /// A Jacobian or stiffness matrix is rank deficient at the evaluated posture.
    #[error("singular posture: {message}")]
    SingularPosture {
        message: String,
        /// Near-null direction, when one is available.
        null_direction: Option<Vec<f64>>,
    },

    /// The passive-joint saddle system could not be solved even on the reduced path.
    #[error("degenerate chain: {0}")]
    DegenerateChain(String),

    /// The stacked passive-joint elimination system is not square and invertible.
    #[error("overconstrained architecture: stacked system is {rows}x{cols} ({reason})")]
    Overconstrained {
        rows: usize,
        cols: usize,
        reason: String,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }
}
