use thiserror::Error;

/// Errors raised by the library. Each variant maps to one of three broad
/// classes (see [`Error::class`]) that the command-line front end turns into
/// exit codes.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("probability out of range: {0}")]
    Probability(String),

    #[error("state is not positive semidefinite (det = {det:e})")]
    NotPsd { det: f64 },

    #[error("pump infeasible at level {level}: beta = {beta} is outside the pump window")]
    PumpInfeasible { level: usize, beta: f64 },

    #[error("post-selection rate underflow ({0:e})")]
    Underflow(f64),

    #[error("magic-state label `{0}` not found in catalog")]
    CatalogMiss(String),

    #[error("infeasible: {reason}")]
    Infeasible {
        reason: String,
        best_infidelity: Option<f64>,
    },

    #[error("search space too large: {0} plans")]
    SpaceTooLarge(u128),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Infeasible,
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Invalid(_)
            | Error::Probability(_)
            | Error::CatalogMiss(_)
            | Error::SpaceTooLarge(_) => ErrorClass::Input,
            Error::PumpInfeasible { .. } | Error::Underflow(_) | Error::Infeasible { .. } => {
                ErrorClass::Infeasible
            }
            Error::NotPsd { .. } | Error::Invariant(_) => ErrorClass::Internal,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if p.is_finite() && (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Probability(format!("{name} = {p}")))
    }
}
