use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("CSV error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("point coincides with the camera center")]
    DegeneratePoint,

    #[error("episode {episode}: {message}")]
    Schema { episode: String, message: String },

    #[error("episode {episode}: meta.json declares {declared} frames but {found} are on disk")]
    FrameCountMismatch {
        episode: String,
        declared: usize,
        found: usize,
    },

    #[error("missing frame file {0}")]
    MissingFrame(PathBuf),

    #[error("{0} split is empty")]
    EmptySplit(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("model expects {expected} timesteps, clip has {got}")]
    TimestepMismatch { expected: usize, got: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("unknown grouping key '{0}'")]
    UnknownGrouping(String),

    #[error("plot rendering failed: {0}")]
    Plot(String),

    #[error(transparent)]
    Nn(#[from] speedcam_nn::NnError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
