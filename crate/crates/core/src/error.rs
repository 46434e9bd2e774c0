use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Processing stage of the resonance fit pipeline, attached to errors that
/// escape [`crate::fit::fit_resonance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validate,
    Delay,
    Circle,
    Phase,
    Refine,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Validate => "validate",
            Stage::Delay => "delay",
            Stage::Circle => "circle",
            Stage::Phase => "phase",
            Stage::Refine => "refine",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-physical fit: {0}")]
    NonPhysicalFit(String),
    #[error("convergence failure: {0}")]
    ConvergenceFailure(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("window mismatch: {0}")]
    WindowMismatch(String),
    #[error("insufficient wings: {0}")]
    InsufficientWings(String),
    #[error("insufficient series: {0}")]
    InsufficientSeries(String),
    #[error("metadata missing: {0}")]
    MetadataMissing(String),
    #[error("malformed sweep: {0}")]
    MalformedSweep(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at(stage: Stage) -> impl FnOnce(Error) -> Error {
        move |e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }

    /// The underlying error with any stage tag removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}
