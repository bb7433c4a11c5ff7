use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("pose ({x:.3}, {y:.3}) lies inside an obstacle")]
    PoseInObstacle { x: f64, y: f64 },

    #[error("episode sampling failed after {attempts} attempts")]
    SamplingFailed { attempts: usize },

    #[error("unknown graph node {0}")]
    UnknownNode(usize),

    #[error("synthesis target is {distance:.3} m from its source, beyond the {limit:.2} m waypoint range")]
    SynthesisRange { distance: f64, limit: f64 },

    #[error("dead end: no actions available")]
    DeadEnd,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("empty training set")]
    EmptyDataset,

    #[error("suite requires a trained distance checkpoint")]
    MissingCheckpoint,

    #[error("unknown tree export: decision {0}")]
    UnknownExport(usize),

    #[error("unsupported document version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
