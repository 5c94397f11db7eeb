use crate::egd::IterationRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{name} = {value} is out of range: {reason}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("oracle returned non-finite value {value} at {point:?}")]
    OracleFailure { point: Vec<f64>, value: f64 },

    #[error("unsupported problem: {0}")]
    Unsupported(String),

    #[error("unknown problem `{name}`; valid names: {}", valid.join(", "))]
    UnknownProblem {
        name: String,
        valid: &'static [&'static str],
    },

    #[error("trace carries no point snapshots")]
    InsufficientTrace,

    #[error("run aborted at iteration {iteration}: {source}")]
    RunAborted {
        iteration: u64,
        #[source]
        source: Box<Error>,
        trace: Vec<IterationRecord>,
    },
}

impl Error {
    /// True for errors caused by bad user input as opposed to a failure while
    /// running.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::OutOfRange { .. }
                | Error::Config { .. }
                | Error::Unsupported(_)
                | Error::UnknownProblem { .. }
        )
    }
}
