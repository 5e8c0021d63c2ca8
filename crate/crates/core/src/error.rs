use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field contains non-finite samples")]
    NonFinite,

    #[error("grid too short: {0}")]
    GridTooShort(String),

    #[error("blow-up at t = {time}: |u_x|_L2 = {gradient:.3e} exceeds {threshold:.3e}")]
    BlowUp { time: f64, gradient: f64, threshold: f64 },

    #[error("no convergence in {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("backward amplification exp({exponent:.2}) exceeds the conditioning budget; supply an Sn schedule")]
    Conditioning { exponent: f64 },

    #[error("modulation matrix too far from identity (|Phi - I| = {deviation:.3e}); increase Sn")]
    IllConditionedModulation { deviation: f64 },

    #[error("time grids do not align: {0}")]
    TimeMismatch(String),

    #[error("fit rejected: {0}")]
    BadFit(String),

    #[error("stage {stage} failed: {source}")]
    Stage { stage: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed dump: {0}")]
    Dump(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::BlowUp { .. }
            | Error::NonConvergence { .. }
            | Error::IllConditionedModulation { .. }
            | Error::BadFit(_)
            | Error::NonFinite => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
