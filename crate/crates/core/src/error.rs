use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} is out of range for a graph with {node_count} nodes")]
    InvalidNode { node: u32, node_count: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("cycle detected in a graph expected to be acyclic")]
    Cycle,

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("generation failed for L={lookahead}, B={branches} after {attempts} attempts")]
    GenerationFailed {
        lookahead: u32,
        branches: u32,
        attempts: usize,
    },

    #[error("attribute word space exhausted after {0} draws")]
    WordsExhausted(usize),

    #[error("sentence does not match any fact template: {0:?}")]
    UnknownTemplate(String),

    #[error("perturbation failed after {attempts} attempts: {reason}")]
    PerturbationFailed { attempts: usize, reason: String },

    #[error("endpoint error: {0}")]
    Endpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
