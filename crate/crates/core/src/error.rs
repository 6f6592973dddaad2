use std::fmt;

use thiserror::Error;

/// Named validity conditions of the bound machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// `(1+δ)Nλ < 1`, domain of the binomial photon-number bounds.
    One,
    /// `λ_S/λ_D > ((1+δ)N-1)/((1-δ)N-1)`, makes `a1` and `a0` negative.
    TwoA,
    /// Binomial form of the two-photon cancellation condition.
    TwoB,
    /// Closed (Stirling) form of the two-photon cancellation condition.
    Two,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::One => write!(f, "Condition 1 ((1+delta)*N*lambda < 1)"),
            Condition::TwoA => write!(f, "Condition 2a"),
            Condition::TwoB => write!(f, "Condition 2b"),
            Condition::Two => write!(f, "Condition 2"),
        }
    }
}

#[derive(Debug, Error)]
pub enum QkdError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{condition} violated: {detail}")]
    ConditionViolated {
        condition: Condition,
        detail: String,
    },

    #[error("vacuous bounds: tagged fraction plus sampling slack is {0} (must be < 1)")]
    VacuousBounds(f64),

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("undefined bound: {0}")]
    UndefinedBound(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("problem too large for exhaustive enumeration: {0}")]
    Scale(String),

    #[error("no feasible grid point: {0}")]
    NoFeasiblePoint(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl QkdError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        QkdError::Domain(msg.into())
    }

    pub(crate) fn condition(condition: Condition, detail: impl Into<String>) -> Self {
        QkdError::ConditionViolated {
            condition,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = QkdError> = std::result::Result<T, E>;
