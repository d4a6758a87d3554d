use std::path::PathBuf;

use thiserror::Error;

use crate::algorithms::{AlgorithmId, Tag};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("algorithm {algorithm} unsupported for p={p}: {reason}")]
    Unsupported {
        algorithm: AlgorithmId,
        p: usize,
        reason: &'static str,
    },

    #[error("rank {rank} blocked at step {step} waiting for tag {tag} from rank {peer} (deadlock suspected)")]
    Deadlock {
        rank: usize,
        step: usize,
        peer: usize,
        tag: Tag,
    },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// A single schema violation, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldViolation {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("invalid descriptor {}: {}", path.display(), join_violations(.violations))]
    Schema {
        path: PathBuf,
        violations: Vec<FieldViolation>,
    },

    #[error("topology file {} referenced by {} cannot be loaded: {message}", topology.display(), env.display())]
    DanglingTopology {
        env: PathBuf,
        topology: PathBuf,
        message: String,
    },
}

impl ConfigError {
    pub fn violations(&self) -> &[FieldViolation] {
        match self {
            ConfigError::Schema { violations, .. } => violations,
            _ => &[],
        }
    }
}

fn join_violations(v: &[FieldViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
