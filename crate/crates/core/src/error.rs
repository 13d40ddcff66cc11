use thiserror::Error;

use crate::graph::NodeId;

/// Errors surfaced by graph construction, the simulator and the harness.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid edge: {0}")]
    InvalidEdge(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("model violation: node {src} sent {kind} to non-neighbor {dst}")]
    ModelViolation {
        src: NodeId,
        dst: NodeId,
        kind: &'static str,
    },

    #[error("CONGEST violation: {kind} needs {bits} bits, budget is {budget}")]
    CongestViolation {
        kind: &'static str,
        bits: usize,
        budget: usize,
    },

    #[error("livelock: event cap of {cap} events exceeded")]
    Livelock { cap: u64 },

    #[error("stalled at quiescence: {waiting} node(s) not terminal, {held} held message(s)")]
    Stalled { waiting: usize, held: usize },

    #[error("codec error: {0}")]
    Codec(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
