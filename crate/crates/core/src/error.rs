use thiserror::Error;

use crate::selective::PValueEstimate;

/// Errors produced by the fscreen library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("design matrix is rank deficient after centering (column {column})")]
    RankDeficient { column: usize },

    #[error("insufficient residual degrees of freedom: n = {n}, p = {p} (need n >= p + 2)")]
    InsufficientDf { n: usize, p: usize },

    #[error("invalid coefficient index set: {0}")]
    BadIndexSet(String),

    #[error("residual sum of squares is zero; F statistics are undefined")]
    DegenerateFit,

    #[error("probability {0} is outside (0, 1)")]
    BadProbability(f64),

    #[error("invalid argument: {0}")]
    BadArgument(String),

    #[error(
        "only {accepted} of {draws} Monte Carlo draws satisfied the conditioning event \
         (rate {rate:.3e}, need {min_accept}); retry with more draws"
    )]
    LowAcceptance {
        accepted: u64,
        draws: u64,
        min_accept: u64,
        rate: f64,
        /// Estimate from the accepted draws, available when `accepted > 0`.
        partial: Option<PValueEstimate>,
    },

    #[error("no Monte Carlo draw out of {draws} satisfied the conditioning event")]
    EmptyConditioningEvent { draws: u64 },

    #[error("overall F test not rejected (F = {f_overall}, p = {p_overall})")]
    ScreeningNotRejected { f_overall: f64, p_overall: f64 },

    #[error("the selective confidence set is empty on the search grid")]
    EmptyInterval,

    #[error("no simulated response passed the screening test")]
    NoScreenedDraws,

    #[error("input error: {0}")]
    Input(String),
}

impl Error {
    /// Stable, machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::RankDeficient { .. } => "RankDeficient",
            Error::InsufficientDf { .. } => "InsufficientDf",
            Error::BadIndexSet(_) => "BadIndexSet",
            Error::DegenerateFit => "DegenerateFit",
            Error::BadProbability(_) => "BadProbability",
            Error::BadArgument(_) => "BadArgument",
            Error::LowAcceptance { .. } => "LowAcceptance",
            Error::EmptyConditioningEvent { .. } => "EmptyConditioningEvent",
            Error::ScreeningNotRejected { .. } => "ScreeningNotRejected",
            Error::EmptyInterval => "EmptyInterval",
            Error::NoScreenedDraws => "NoScreenedDraws",
            Error::Input(_) => "Input",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
