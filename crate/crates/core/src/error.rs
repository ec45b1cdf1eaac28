use thiserror::Error;

use crate::model::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("ratio undefined: no packets transmitted")]
    UndefinedRatio,
    #[error("invalid distance {0} m")]
    InvalidDistance(f64),
    #[error("nodes {0} and {1} are coincident")]
    CoincidentNodes(NodeId, NodeId),
    #[error("no configured power level reaches the receiver")]
    Unreachable,
    #[error("event scheduled at {at} s but clock is at {now} s")]
    PastEvent { at: f64, now: f64 },
    #[error("node {0} is dead")]
    DeadSender(NodeId),
    #[error("node {0} ran out of energy")]
    InsufficientEnergy(NodeId),
    #[error("only {alive} alive nodes for {clusters} clusters")]
    TooFewNodes { alive: usize, clusters: usize },
    #[error("cluster {0} has fewer than two alive nodes")]
    ClusterDead(u32),
    #[error("fewer than {0} completed rounds of history")]
    InsufficientHistory(u32),
    #[error("insufficient seeds: need at least 2, got {0}")]
    InsufficientSeeds(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{key}: {msg}")]
    Validation { key: String, msg: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
