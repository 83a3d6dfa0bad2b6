//! Error types shared by every module of the crate.

use thiserror::Error;

/// A scenario or parameter set that violates the admissibility conditions
/// of the model.
///
/// Every variant knows the field path of the offending value (see
/// [`ValidationError::field`]) so that front ends can point at the exact
/// entry of a configuration file.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("alpha must differ from 1")]
    AlphaIsOne,
    #[error("alpha must be positive and finite, got {0}")]
    AlphaNotPositive(f64),
    #[error("capacity must be positive and finite, got {0}")]
    CapacityNotPositive(f64),
    #[error("scenario needs at least one user")]
    NoUsers,
    #[error("2-alpha-gamma=0 for user {user}")]
    DegenerateExponent { user: usize },
    #[error("a must be positive and finite for user {user}, got {value}")]
    GrowthNotPositive { user: usize, value: f64 },
    #[error("gamma must lie in [0, 1] for user {user}, got {value}")]
    GammaOutOfRange { user: usize, value: f64 },
    #[error("gamma for user {user} is within 1e-9 of 1 but not equal to 1 ({value}); use exactly 1")]
    GammaNearOne { user: usize, value: f64 },
    #[error("b must lie in (0, 1) for user {user}, got {value}")]
    DecreaseOutOfRange { user: usize, value: f64 },
    #[error("initial rate of user {user} must be positive and finite, got {value}")]
    RateNotPositive { user: usize, value: f64 },
    #[error("expected {expected} initial rates (one per user), got {got}")]
    RateCountMismatch { expected: usize, got: usize },
}

impl ValidationError {
    /// Path of the offending field, using the scenario file layout
    /// (`alpha`, `capacity`, `users[2].gamma`, `initial_rates[0]`, ...).
    pub fn field(&self) -> String {
        match self {
            Self::AlphaIsOne | Self::AlphaNotPositive(_) => "alpha".to_owned(),
            Self::CapacityNotPositive(_) => "capacity".to_owned(),
            Self::NoUsers => "users".to_owned(),
            Self::DegenerateExponent { user } => format!("users[{user}].gamma"),
            Self::GrowthNotPositive { user, .. } => format!("users[{user}].a"),
            Self::GammaOutOfRange { user, .. } | Self::GammaNearOne { user, .. } => {
                format!("users[{user}].gamma")
            }
            Self::DecreaseOutOfRange { user, .. } => format!("users[{user}].b"),
            Self::RateNotPositive { user, .. } => format!("initial_rates[{user}]"),
            Self::RateCountMismatch { .. } => "initial_rates".to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),

    /// An argument outside the domain of an operation (negative time,
    /// decreasing rates, non-positive multiplier, malformed grid, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{routine} did not converge within {iterations} iterations")]
    NotConverged {
        routine: &'static str,
        iterations: usize,
    },

    /// Two independent computations of the same quantity disagree.
    #[error("cross-check failed for {quantity}: {left} vs {right}")]
    CrossCheck {
        quantity: &'static str,
        left: f64,
        right: f64,
    },

    /// A structural property that the theory guarantees was observed to fail.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("objective is monotone on [{lo}, {hi}]; bracket contains no interior minimum")]
    NoInteriorMinimum { lo: f64, hi: f64 },
}

impl Error {
    /// Whether the failure is numerical (non-convergence, disagreement
    /// between routes) rather than a problem with the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::NotConverged { .. }
                | Self::CrossCheck { .. }
                | Self::Invariant(_)
                | Self::NoInteriorMinimum { .. }
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
