use alloc::string::String;
use core::fmt;

/// Errors raised by the core numerics.
///
/// Hypothesis and admissibility *failures* are reported as data
/// (see [`crate::model::HypothesisReport`] and
/// [`crate::constants::AdmissibilityReport`]); these variants cover inputs
/// that cannot be evaluated at all and integrity failures during a run.
#[derive(Debug, Clone, PartialEq)]
#[non_exhaustive]
pub enum Error {
    /// Malformed input: wrong lengths, non-finite values, bad grid sizes.
    Input(String),
    /// An argument lies outside the mathematical domain of the operation.
    Domain { what: &'static str, value: f64 },
    /// A quantity required by the operation needs a hypothesis that does not hold.
    Hypothesis(String),
    /// The diagonalizing transform needs `d > a` and `µ > 0`.
    TransformUnavailable(&'static str),
    /// A step produced a NaN or infinite value.
    NonFinite {
        field: &'static str,
        cell: usize,
        t: f64,
        step: Option<u64>,
    },
    /// `exp(ε v)` overflowed while evaluating the Lyapunov functional.
    Overflow { max_v: f64 },
}

impl Error {
    /// Integrity errors abort a run; everything else is an input problem.
    pub fn is_integrity(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Overflow { .. })
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn at_step(self, step: u64) -> Self {
        match self {
            Error::NonFinite { field, cell, t, .. } => Error::NonFinite {
                field,
                cell,
                t,
                step: Some(step),
            },
            other => other,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Input(msg) => write!(f, "invalid input: {msg}"),
            Error::Domain { what, value } => write!(f, "{what} out of domain: {value}"),
            Error::Hypothesis(msg) => write!(f, "hypothesis not satisfied: {msg}"),
            Error::TransformUnavailable(why) => {
                write!(f, "diagonalizing transform unavailable: {why}")
            }
            Error::NonFinite {
                field,
                cell,
                t,
                step,
            } => {
                write!(f, "non-finite value in {field} at cell {cell}, t = {t}")?;
                if let Some(step) = step {
                    write!(f, " (step {step})")?;
                }
                Ok(())
            }
            Error::Overflow { max_v } => {
                write!(f, "Lyapunov functional overflowed (max v = {max_v})")
            }
        }
    }
}

impl core::error::Error for Error {}
