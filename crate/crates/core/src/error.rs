use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected_w}x{expected_h}, found {found_w}x{found_h}")]
    Shape {
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },
    #[error("events are not sorted by timestamp (first violation at index {index})")]
    Unsorted { index: usize },
    #[error("event {index} at t={t} lies outside the window [{t0}, {t1})")]
    OutsideWindow { index: usize, t: f64, t0: f64, t1: f64 },
    #[error("event window [{t0}, {t1}) has zero or negative length")]
    EmptyWindow { t0: f64, t1: f64 },
    #[error("pixel ({x}, {y}) outside {width}x{height} raster")]
    PixelOutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("camera pose ({x:.3}, {y:.3}, {z:.3}) lies outside the room")]
    Pose { x: f64, y: f64, z: f64 },
    #[error("solver diverged at pyramid level {level}, iteration {iteration}")]
    SolverDivergence { level: usize, iteration: usize },
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Format(#[from] crate::io::FormatError),
    #[error("{}: {source}", path.display())]
    Malformed {
        path: PathBuf,
        #[source]
        source: crate::io::FormatError,
    },
    #[error(transparent)]
    Config(#[from] crate::io::ConfigError),
    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn shape(expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Shape {
            expected_w: expected.0,
            expected_h: expected.1,
            found_w: found.0,
            found_h: found.1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Returns a shape error unless both dimension pairs agree.
pub(crate) fn ensure_same(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::shape(expected, found))
    }
}
