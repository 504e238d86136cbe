use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grids are not co-registered: {0}")]
    GridMismatch(String),

    #[error("point ({x}, {y}) lies outside the grid extent")]
    OutOfExtent { x: f64, y: f64 },

    #[error("nodata value in stencil at node ({i}, {j})")]
    Nodata { i: usize, j: usize },

    #[error("invalid polyline: {0}")]
    InvalidPolyline(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("ESRI ASCII parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("CSV parse error at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("front vanished: the level-set function no longer changes sign")]
    FrontVanished,

    #[error("{0}")]
    Model(String),

    #[error("config error at {pointer}: {msg}")]
    Config { pointer: String, msg: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the stage that produced it.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
