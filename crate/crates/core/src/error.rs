use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("comment {comment_id} has no toxicity score")]
    MissingToxicity { comment_id: String },

    #[error("duplicate interaction for user {user:?} in {subreddit:?}")]
    DuplicateInteraction { user: String, subreddit: String },

    #[error("unknown {kind} {name:?}")]
    UnknownEntity { kind: &'static str, name: String },

    #[error("user index {0} has no training interactions")]
    UnknownUser(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("training diverged at epoch {epoch}; lower the learning rate")]
    Diverged { epoch: usize },

    #[error("training set is empty")]
    EmptyTrainSet,

    #[error("calibration infeasible: realized toxic rate {realized:.4}, target {target:.4}")]
    Calibration { realized: f64, target: f64 },

    #[error("unsupported checkpoint format {0:?}")]
    CheckpointFormat(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
