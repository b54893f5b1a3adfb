use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("integration blew up at t = {t}: {detail}")]
    IntegrationBlowup { t: f64, detail: String },
    #[error("not invertible: {0}")]
    NotInvertible(String),
    #[error("assumption {assumption} violated: {detail}")]
    AssumptionViolated { assumption: String, detail: String },
    #[error("relative degree undefined: CA^iB vanishes for every i < n and D = 0")]
    DegenerateRelativeDegree,
    #[error("relative degree {0} where 1 was required")]
    WrongRelativeDegree(usize),
    #[error("stability violation: {0}")]
    StabilityViolation(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("non-resonance suspected: {0}")]
    NonResonanceSuspected(String),
    #[error("spectrum not Hurwitz: {0}")]
    NotHurwitz(String),
    #[error("rank drift: {0}")]
    RankDrift(String),
    #[error("basis incomplete: projection residual {0:.3e}")]
    BasisIncomplete(f64),
    #[error("no immersion found: {0}")]
    NoImmersionFound(String),
    #[error("{line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
