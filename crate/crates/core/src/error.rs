use std::fmt;

/// Errors produced by the selection toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Structured input that could not be decoded or violates a schema rule.
    #[error("{source_name}{}: {message}", LineSuffix(*.line))]
    Parse {
        source_name: String,
        line: Option<u64>,
        message: String,
    },

    /// A value that decoded fine but breaks a domain invariant.
    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    #[error("empty task `{0}`")]
    EmptyTask(String),

    #[error("task `{task_id}` not satisfiable by resource `{resource_id}`: no capability matches requirement {requirement}")]
    Unsatisfiable {
        task_id: String,
        resource_id: String,
        requirement: String,
    },

    #[error("empty viable set for task `{0}`")]
    EmptyViableSet(String),

    #[error("affinity value at index {0} is NaN")]
    NanAffinity(usize),

    #[error("unknown task `{task_id}` (workload_param {workload_param}): no baseline profiles")]
    UnknownTask { task_id: String, workload_param: i64 },

    #[error("no queue history for machine `{machine}` queue `{queue}` in window")]
    NoQueueHistory { machine: String, queue: String },

    /// A prediction or simulation input the caller did not supply.
    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("cannot compare results: {0}")]
    Mismatch(String),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }

    pub(crate) fn parse(source_name: &str, line: Option<u64>, message: impl fmt::Display) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.to_string(),
        }
    }

    /// True for failures of the underlying stream rather than of its content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

struct LineSuffix(Option<u64>);

impl fmt::Display for LineSuffix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(line) => write!(f, " line {line}"),
            None => Ok(()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
