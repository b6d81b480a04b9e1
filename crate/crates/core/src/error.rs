use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("index {index} out of range for axis of length {len}")]
    Index { index: usize, len: usize },

    #[error("patch at {origin:?} with size {size:?} exceeds grid {grid:?}")]
    Bounds {
        origin: (usize, usize),
        size: (usize, usize),
        grid: (usize, usize),
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid metadata: {0}")]
    Meta(String),

    #[error("non-finite value in {tensor} at flat index {index}")]
    NonFinite { tensor: String, index: usize },

    #[error("fit diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64, trace: Vec<f64> },

    #[error("config: {0}")]
    Config(String),

    #[error("nv3d: bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("nv3d: unsupported version {0}")]
    VersionMismatch(u16),

    #[error("nv3d: truncated payload (expected {expected} bytes, found {found})")]
    Truncated { expected: usize, found: usize },

    #[error("nv3d: dimension overflow ({0})")]
    DimensionOverflow(String),

    #[error("nv3d: {0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("station csv line {line}: {msg}")]
    StationCsv { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
