use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("normal matrix is rank deficient (reciprocal condition {rcond:.3e})")]
    RankDeficient { rcond: f64 },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("no contact cluster survived segmentation")]
    NoContact,
    #[error("cluster too small: {points} points, need at least {required}")]
    DegenerateCluster { points: usize, required: usize },
    #[error("contact lost during control")]
    LostContact,
    #[error("region of interest contains no cells")]
    EmptyRegion,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains a single class ({0})")]
    SingleClassDataset(u8),
    #[error("sample shape {got:?} does not match model input {expected:?}")]
    ModelSampleMismatch {
        expected: [usize; 3],
        got: [usize; 3],
    },
    #[error("event {event} is not valid in state {state}")]
    InvalidEvent { state: String, event: String },
    #[error("bowl is empty")]
    WorldExhausted,
    #[error("could not place object {index} after {attempts} attempts")]
    OverfilledBowl { index: usize, attempts: usize },
    #[error("object dropped: fingertip no longer touches it")]
    DroppedObject,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown classifier kind `{0}`")]
    UnknownClassifier(String),
    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
