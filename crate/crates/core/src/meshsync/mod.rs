//! Opportunistic replicated record store.
//!
//! Every node owns append-only streams keyed by `(origin, stream)`. Two
//! nodes reconcile by exchanging contiguous-prefix digests and shipping the
//! missing suffixes in sequence order, so a receiver never holds a gap.
//! Records hop across intermediaries because a node forwards everything it
//! holds, not only what it created.

mod session;
mod store;

pub use session::{sync_session, sync_session_limited, LinkMonitor, SyncSummary};
pub use store::{diff, Digest, KeyRange, Store};

use serde::{Deserialize, Serialize};

pub type NodeId = String;

pub const DEFAULT_LINK_THRESHOLD: f64 = 0.5;

/// Streams in the order they win a constrained contact window. Unlisted
/// streams follow, alphabetically.
pub const STREAM_PRIORITY: [&str; 3] = ["scorecard", "casualty_map", "robot_pose"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("link quality {quality} below threshold {threshold}")]
    LinkTooWeak { quality: f64, threshold: f64 },
    #[error("link {link:?} does not join nodes {a} and {b}")]
    LinkMismatch {
        link: (NodeId, NodeId),
        a: NodeId,
        b: NodeId,
    },
    #[error("invalid name {0:?}: names must be non-empty and free of tabs and newlines")]
    InvalidName(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub origin: NodeId,
    pub stream: String,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub key: RecordKey,
    pub payload: Vec<u8>,
    pub created_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub a: NodeId,
    pub b: NodeId,
    pub quality: f64,
    pub threshold: f64,
}

impl LinkState {
    pub fn new(a: impl Into<NodeId>, b: impl Into<NodeId>, quality: f64) -> Self {
        LinkState {
            a: a.into(),
            b: b.into(),
            quality,
            threshold: DEFAULT_LINK_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn permits_sync(&self) -> bool {
        self.quality >= self.threshold
    }

    /// Node pair ordered as `(min, max)`.
    pub fn pair(&self) -> (NodeId, NodeId) {
        if self.a <= self.b {
            (self.a.clone(), self.b.clone())
        } else {
            (self.b.clone(), self.a.clone())
        }
    }
}

pub(crate) fn stream_rank(stream: &str) -> (usize, &str) {
    match STREAM_PRIORITY.iter().position(|s| *s == stream) {
        Some(i) => (i, ""),
        None => (STREAM_PRIORITY.len(), stream),
    }
}

pub(crate) fn check_name(name: &str) -> Result<(), MeshError> {
    if name.is_empty() || name.contains(['\t', '\n', '\r']) {
        Err(MeshError::InvalidName(name.to_string()))
    } else {
        Ok(())
    }
}
