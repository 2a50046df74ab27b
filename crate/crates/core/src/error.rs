//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    Domain(String),
    /// A decoy-state bound could not be formed: a ratio denominator lost its
    /// sign or the yield linear program is inconsistent. `bound` names the
    /// quantity that failed.
    EstimationInfeasible { bound: &'static str, detail: String },
    /// Fluctuation ranges of adjacent decoy intensities overlap, so the
    /// intensities are no longer distinguishable.
    IntensityOrdering(String),
    /// The tomography click rate is too high for the intensity inversion.
    Saturation(String),
    /// An Eve-information plugin returned a value outside [0, 1].
    PluginContract(f64),
    /// Channel transmittance 1 has unbounded repeaterless capacity.
    InfiniteCapacity,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::EstimationInfeasible { bound, detail } => {
                write!(f, "estimation infeasible for {bound}: {detail}")
            }
            Error::IntensityOrdering(msg) => write!(f, "intensity ordering violated: {msg}"),
            Error::Saturation(msg) => write!(f, "tomography saturated: {msg}"),
            Error::PluginContract(v) => {
                write!(f, "Eve-information plugin returned {v}, outside [0, 1]")
            }
            Error::InfiniteCapacity => write!(f, "lossless channel has unbounded capacity"),
        }
    }
}

impl std::error::Error for Error {}
