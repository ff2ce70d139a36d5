use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} must be finite")]
    NonFinite { what: &'static str },

    #[error("{what} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ledger incomplete: {missing} trial(s) without a response")]
    IncompleteLedger { missing: usize },

    #[error("response refers to unknown trial {0}")]
    UnknownTrial(u32),

    #[error("trial {0} already has a response")]
    DuplicateResponse(u32),

    #[error("no information to fit: {0}")]
    NoInformation(String),

    #[error("ledger contains no reference-vs-reference bias probes")]
    NoBiasProbes,

    #[error("steepness k must be positive, got {0}")]
    NonPositiveSteepness(f64),

    #[error("valve interlock violated: fill and vent both open")]
    ValveInterlock,

    #[error("training set is empty after segment removal")]
    EmptyTrainingSet,

    #[error("training diverged: member {member}, epoch {epoch}, loss {loss}")]
    Divergence { member: usize, epoch: usize, loss: f64 },

    #[error("improvement undefined: baseline uncertainty is zero")]
    UndefinedImprovement,

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("display ruptured at t = {time:.3} s")]
    Rupture { time: f64 },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("protocol: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
