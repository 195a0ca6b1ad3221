use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Failures raised by the numerical routines.
///
/// Quadrature non-convergence is normally reported through
/// [`QuadResult::converged`](crate::QuadResult::converged) rather than as an
/// error; `NotConverged` is used only where a caller asked for a hard failure.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    Domain(&'static str),
    /// An integrand or kernel returned NaN or ±∞ where a finite value was required.
    NonFinite { what: &'static str, at: f64 },
    /// An integral or sum diverges.
    Divergent(&'static str),
    /// A numerical procedure ran out of budget.
    NotConverged {
        what: &'static str,
        value: f64,
        error_estimate: f64,
    },
    /// A supplied function failed a construction-time consistency check.
    Inconsistent {
        what: &'static str,
        at: f64,
        discrepancy: f64,
    },
    /// A textual descriptor could not be parsed.
    Parse(alloc::string::String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::NonFinite { what, at } => write!(f, "non-finite value from {what} at {at}"),
            Error::Divergent(msg) => write!(f, "divergent: {msg}"),
            Error::NotConverged {
                what,
                value,
                error_estimate,
            } => write!(
                f,
                "{what} did not converge (value {value}, error estimate {error_estimate})"
            ),
            Error::Inconsistent {
                what,
                at,
                discrepancy,
            } => write!(f, "{what} inconsistent at {at} (discrepancy {discrepancy})"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

/// Shorthand for a domain check.
pub(crate) fn ensure(cond: bool, msg: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Domain(msg))
    }
}
