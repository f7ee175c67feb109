use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix did not have the size the problem requires.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A scalar argument is outside its admissible range.
    InvalidParameter { name: &'static str, value: f64 },
    /// Evaluation requested before the initial time.
    TimeBeforeStart { t: f64, t0: f64 },
    UnknownProblem(String),
    /// The constraint matrix does not have full row rank.
    RankDeficient { rank: usize, rows: usize },
    NewtonStagnation { iterations: usize, residual: f64 },
    InsufficientSamples { found: usize, needed: usize },
    /// A check was requested whose hypotheses are not met.
    NotApplicable(String),
    /// A user-supplied oracle returned a non-finite value.
    NonFinite(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, found {found}"),
            Error::InvalidParameter { name, value } => {
                write!(f, "invalid value {value} for parameter `{name}`")
            }
            Error::TimeBeforeStart { t, t0 } => {
                write!(f, "time {t} lies before the initial time {t0}")
            }
            Error::UnknownProblem(name) => write!(f, "unknown builtin problem `{name}`"),
            Error::RankDeficient { rank, rows } => write!(
                f,
                "constraint matrix has rank {rank} but {rows} rows; full row rank is required"
            ),
            Error::NewtonStagnation {
                iterations,
                residual,
            } => write!(
                f,
                "Newton iteration stagnated after {iterations} iterations at residual {residual:e}"
            ),
            Error::InsufficientSamples { found, needed } => {
                write!(f, "{found} usable samples, at least {needed} required")
            }
            Error::NotApplicable(why) => write!(f, "check not applicable: {why}"),
            Error::NonFinite(what) => write!(f, "non-finite value produced by {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
