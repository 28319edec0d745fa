use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the library.
///
/// Variants are grouped so callers can map them onto coarse failure classes
/// (see [`Error::is_numerical`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension { expected: usize, got: usize, context: &'static str },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid prior: {0}")]
    Prior(String),

    #[error("sequence too short: need more than {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("training diverged (loss became non-finite at epoch {epoch})")]
    Diverged { epoch: usize },

    #[error("empty mask: no foreground pixels")]
    EmptyMask,

    #[error("degenerate region: {0}")]
    Degenerate(String),

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("too few neighbours: need at least {needed}, found {found}")]
    TooFewNeighbors { needed: usize, found: usize },

    #[error("first fundamental form is not positive definite")]
    NotPositiveDefinite,

    #[error("umbilic point: principal directions are undefined at the seed")]
    UmbilicSeed,

    #[error("seed is {distance:.4} away from the nearest cloud point (limit {limit:.4})")]
    SeedTooFar { distance: f64, limit: f64 },

    #[error("scan domain: {0}")]
    Domain(String),

    #[error("no admissible scan anchor: stencil does not fit inside {width}x{height}")]
    NoAdmissibleAnchor { width: usize, height: usize },

    #[error("anchor ({0}, {1}) is not admissible for this domain")]
    InadmissibleAnchor(i64, i64),

    #[error("stencil at anchor ({0}, {1}) touches a failed mesh node")]
    FailedNode(i64, i64),

    #[error("scan domain differs from the one the predictors were trained on")]
    DomainMismatch,

    #[error("network library is empty")]
    EmptyLibrary,

    #[error("parse error in {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {msg}")]
    Image { path: PathBuf, msg: String },
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::Diverged { .. }
                | Error::RankDeficient(_)
                | Error::NotPositiveDefinite
                | Error::UmbilicSeed
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(what: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse { what: what.into(), msg: msg.into() }
    }
}
