use core::fmt;

use crate::model::RegimeKind;

/// Every failure the engine can report.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    InvalidParams(&'static str),
    LengthMismatch { factors: usize, rates: usize },
    /// The static map needs |mΩ_-²| > 2|λ| strictly.
    NotInUnbrokenRegime { split: f64, coupling: f64 },
    /// The coefficients left the chart of the four-factor ansatz.
    SingularConfiguration(&'static str),
    RegimeMismatch { expected: RegimeKind, found: RegimeKind },
    ThetaPlusDomain { m_alpha_dot: f64 },
    AlphaMinusZero,
    BetaRadicand { value: f64 },
    LogDomain { value: f64 },
    ExceptionalDenominator,
    StepFailure { t: f64, reason: &'static str },
    NonPositiveRho { rho: f64 },
    BoundaryContamination { edge_ratio: f64 },
    ConvergenceFailure(&'static str),
    GridMismatch,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParams(what) => write!(f, "invalid parameters: {what}"),
            Error::LengthMismatch { factors, rates } => {
                write!(f, "{factors} flow factors but {rates} rates")
            }
            Error::NotInUnbrokenRegime { split, coupling } => write!(
                f,
                "static Dyson map requires |m Omega_-^2| > 2|lambda| (got {split} vs {coupling})"
            ),
            Error::SingularConfiguration(what) => write!(f, "singular configuration: {what}"),
            Error::RegimeMismatch { expected, found } => {
                write!(f, "constants are for {expected:?} but parameters are {found:?}")
            }
            Error::ThetaPlusDomain { m_alpha_dot } => {
                write!(f, "|m alpha_-'| = {} exceeds 2", m_alpha_dot.abs())
            }
            Error::AlphaMinusZero => write!(f, "alpha_- vanishes; alpha_+ recovery is singular"),
            Error::BetaRadicand { value } => write!(f, "beta radicand is negative ({value})"),
            Error::LogDomain { value } => write!(f, "theta_- logarithm argument not positive ({value})"),
            Error::ExceptionalDenominator => {
                write!(f, "m Omega_-^2 - 2 lambda vanishes; theta_- recovery undefined")
            }
            Error::StepFailure { t, reason } => write!(f, "integration failed at t = {t}: {reason}"),
            Error::NonPositiveRho { rho } => write!(f, "Ermakov amplitude not positive ({rho})"),
            Error::BoundaryContamination { edge_ratio } => {
                write!(f, "state amplitude at the grid edge is {edge_ratio:e} of its peak")
            }
            Error::ConvergenceFailure(what) => write!(f, "no convergence: {what}"),
            Error::GridMismatch => write!(f, "grid shapes do not match"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
