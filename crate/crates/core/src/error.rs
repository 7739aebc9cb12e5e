use std::path::PathBuf;

/// Errors raised anywhere in the reconstruction toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("event {index} at t={t} lies outside the window [{t_start}, {t_end}]")]
    EventOutsideWindow {
        index: usize,
        t: f64,
        t_start: f64,
        t_end: f64,
    },

    #[error("ISTA diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("non-finite activation in layer `{layer}`")]
    NonFinite { layer: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("flow provider exhausted at step {step}")]
    ProviderExhausted { step: usize },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numeric,
    Config,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::Step { .. } => e,
            e => Error::Step {
                step,
                source: Box::new(e),
            },
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::Format(_)
            | Error::Dimension(_)
            | Error::EventOutsideWindow { .. }
            | Error::Checksum { .. }
            | Error::MissingTensor(_) => ErrorKind::Input,
            Error::Divergence { .. } | Error::NonFinite { .. } | Error::UndefinedMetric(_) => ErrorKind::Numeric,
            Error::Parameter(_) | Error::ProviderExhausted { .. } => ErrorKind::Config,
            Error::Step { source, .. } => source.kind(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
