use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grids are not compatible: {0}")]
    GridMismatch(String),

    #[error("cell ({row}, {col}) is outside the {height}x{width} grid")]
    CellOutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tile of {height}x{width} pixels is smaller than the {patch}-pixel patch")]
    TileTooSmall {
        height: usize,
        width: usize,
        patch: usize,
    },

    #[error("no prediction supplied for patch window at row {row_off}, col {col_off}")]
    MissingPatch { row_off: usize, col_off: usize },

    #[error("crop calendar has no value at lon {lon}, lat {lat}; use the hemispheric fallback window")]
    CalendarNodata { lon: f64, lat: f64 },

    #[error("feature set {0} needs consensus layers, which are absent")]
    MissingConsensus(&'static str),

    #[error("model was trained on feature set {model}, inputs provide {given}")]
    FeatureSetMismatch { model: String, given: String },

    #[error("labels contain a single class")]
    SingleClass,

    #[error("empty evaluation region")]
    EmptyRegion,

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("unsupported coordinate reference system EPSG:{0}")]
    UnsupportedCrs(u32),

    #[error("malformed {format} file {path}: {message}")]
    Parse {
        format: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error("TIFF error in {path}: {source}")]
    Tiff {
        path: PathBuf,
        #[source]
        source: tiff::TiffError,
    },

    #[error("Parquet error in {path}: {source}")]
    Parquet {
        path: PathBuf,
        #[source]
        source: parquet::errors::ParquetError,
    },

    #[error("I/O error on {path}: {source}")]
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

    pub(crate) fn parse(format: &'static str, path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            format,
            path: path.into(),
            message: message.to_string(),
        }
    }
}
