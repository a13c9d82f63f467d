use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter vector has length {got}, layout expects {expected}")]
    Layout { expected: usize, got: usize },

    #[error("Caglioti width is non-positive at x = {x} (phase {phase})")]
    Caglioti { x: f64, phase: String },

    #[error("phase `{0}` has no usable reference reflections")]
    EmptyReflections(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("pair {pair} has no retained sweeps")]
    EmptyAccumulator { pair: usize },

    #[error("total importance weight is zero")]
    ZeroWeight,

    #[error("tempering did not reach beta = 1 within {0} levels")]
    MaxLevels(usize),

    #[error("empty input")]
    EmptyInput,

    #[error("data generation failed: {0}")]
    Generation(String),

    #[error("no reference condition available: {0}")]
    MissingReference(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parse { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
