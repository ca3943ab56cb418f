use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ring capacity must be at least 1")]
    ZeroCapacity,
    #[error("{what} must be at least 1")]
    ZeroCount { what: &'static str },
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("self-loop on node {0} requires an explicit cycle flag")]
    GuardedSelfLoop(usize),
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("watchdog expired after {elapsed:?}; nodes still running: {stuck:?}")]
    Watchdog {
        elapsed: Duration,
        stuck: Vec<String>,
    },
    #[error("node `{node}` failed: {reason}")]
    Node { node: String, reason: String },
    #[error("node `{0}` panicked")]
    Panicked(String),
    #[error("failed to spawn node thread: {0}")]
    Spawn(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
