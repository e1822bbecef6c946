use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, mapped onto the CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad command line or configuration (exit code 1).
    Config,
    /// Malformed or inconsistent input data (exit code 2).
    Data,
    /// A numerical procedure could not produce a result (exit code 3).
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("PGM format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid camera model: {0}")]
    InvalidCamera(String),

    #[error("homography is singular (|det| = {0:e})")]
    SingularHomography(f64),

    #[error("warp region does not overlap the source image")]
    EmptyWarp,

    #[error("point is degenerate after rotation (l_z = {0:e})")]
    DegeneratePoint(f64),

    #[error("invalid template or search band: {0}")]
    InvalidTemplate(String),

    #[error("insufficient overlap: no candidate had at least 25% valid template pixels")]
    InsufficientOverlap,

    #[error("no textured pixels above the gradient threshold")]
    NoTexture,

    #[error("no epipole: translation is zero")]
    NoEpipole,

    #[error("insufficient flow: {0} vectors survived, at least 8 required")]
    InsufficientFlow(usize),

    #[error("degenerate flow configuration: {0}")]
    DegenerateFlow(String),

    #[error("ambiguous pose: cheirality tie between {0} candidates")]
    AmbiguousPose(usize),

    #[error("all flow lines are parallel")]
    ParallelFlow,

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("ill-conditioned tag observation (condition number {0:e})")]
    IllConditionedTag(f64),

    #[error("invalid tag observation: {0}")]
    InvalidTag(String),

    #[error("out-of-order measurement: t = {got} after t = {last}")]
    NonMonotonic { last: f64, got: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("empty series")]
    EmptySeries,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {reason}")]
    Csv { path: PathBuf, reason: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::InvalidParameter(_) | Error::InvalidCamera(_) => {
                ErrorKind::Config
            }
            Error::Format { .. }
            | Error::InvalidImage(_)
            | Error::InvalidTag(_)
            | Error::NonMonotonic { .. }
            | Error::Dataset(_)
            | Error::Alignment(_)
            | Error::EmptySeries
            | Error::Io { .. }
            | Error::Csv { .. } => ErrorKind::Data,
            _ => ErrorKind::Numeric,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
