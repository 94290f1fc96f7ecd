use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The robot sits on a map line, so the side of the line (and with it the
    /// measurement Jacobian) is undefined.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("singular innovation covariance (condition number {condition:.3e})")]
    SingularUpdate { condition: f64 },

    #[error("pose ({x:.3}, {y:.3}) is outside the world")]
    InvalidPose { x: f64, y: f64 },

    #[error("scenario aborted: {0}")]
    ScenarioAborted(String),

    #[error("parse error in {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

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
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
