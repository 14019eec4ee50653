use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("window at (x={x}, y={y}) of size {size} exceeds image bounds {width}x{height}")]
    Bounds {
        x: usize,
        y: usize,
        size: usize,
        width: usize,
        height: usize,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("metric `{metric}` missing on {} record(s): {}", ids.len(), preview(ids))]
    ScoringGap { metric: String, ids: Vec<String> },

    #[error("HR patch data unavailable for {} record(s): {}", ids.len(), preview(ids))]
    MissingPatchData { ids: Vec<String> },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("manifest schema `{found}` is not supported (expected `{expected}`)")]
    Version { found: String, expected: String },

    #[error("no data: {0}")]
    EmptyData(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("image codec error on {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 8;
    let mut out = ids
        .iter()
        .take(SHOWN)
        .cloned()
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > SHOWN {
        out.push_str(&format!(", ... ({} more)", ids.len() - SHOWN));
    }
    out
}
