use thiserror::Error;

use crate::mdp::{ActionId, StateId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Syntax error in a model or track file.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The model violates one of its structural invariants.
    #[error("invalid model: {0}")]
    Validation(String),

    #[error("model is not contracting: {0}")]
    NotContracting(String),

    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("Hoeffding radius is undefined without samples")]
    NoSamples,

    #[error("transition ({state}, {action}, {successor}) is not part of the topology")]
    UnknownTransition {
        state: StateId,
        action: ActionId,
        successor: StateId,
    },

    #[error("interval function of state {state}, action {action} admits no distribution")]
    Infeasible { state: StateId, action: ActionId },

    #[error("state {state} has no action in scope")]
    NoActionInScope { state: StateId },

    #[error("models do not share the same topology")]
    TopologyMismatch,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("replication {index}: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// The underlying error, looking through replication wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Replication { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
