use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("lattice of {requested} sites exceeds the site budget of {budget}")]
    SiteBudgetExceeded { requested: u128, budget: usize },

    #[error("zero-length displacement between two spins")]
    ZeroDisplacement,

    #[error("coupling profile needs at least two occupied sites")]
    EmptyProfile,

    #[error("threshold {threshold} is not reached within the simulation box (radius limit {limit_angstrom} Å)")]
    BoxTooSmall { threshold: f64, limit_angstrom: f64 },

    #[error("every lattice realization left the central spin isolated at abundance {abundance}")]
    DegenerateAbundance { abundance: f64 },

    #[error("tabulated line shape cannot be normalized: {0}")]
    Normalization(String),

    #[error("P0 = {p0} exceeds the asymptote A = {asymptote}")]
    InconsistentAsymptote { p0: f64, asymptote: f64 },

    #[error("time grid must be strictly increasing (index {index})")]
    NonMonotonicTime { index: usize },

    #[error("non-finite value during integration at t = {time} s")]
    NonFinite { time: f64 },

    #[error("fit did not converge after {iterations} iterations (last residue {residue:e})")]
    NoConvergence { iterations: usize, residue: f64 },

    #[error("oracle supports at most {max} spins, got {got}")]
    TooManySpins { max: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
