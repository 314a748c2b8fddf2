use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {field}: {detail}")]
    Format { field: &'static str, detail: String },

    #[error("intensity {value} at pixel {index} is outside [0, 65535]")]
    Range { index: usize, value: f64 },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("b-value ordering: {0}")]
    Ordering(String),

    #[error("empty input: {0}")]
    EmptySet(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("arity mismatch: expected {expected} features, found {found}")]
    Arity { expected: usize, found: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("neuron {neuron} wins no labeled sample")]
    Labeling { neuron: usize },

    #[error("kappa undefined: chance agreement equals 1")]
    UndefinedKappa,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage { stage: stage.into(), source: Box::new(self) }
    }

    /// True for errors caused by bad inputs or configuration, false for
    /// failures inside the numerics or the filesystem.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::Training { .. } => false,
            Error::Io { source, .. } => matches!(
                source.kind(),
                std::io::ErrorKind::NotFound
                    | std::io::ErrorKind::InvalidData
                    | std::io::ErrorKind::UnexpectedEof
            ),
            Error::Stage { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}

/// Attaches a stage name to any error in a `Result`.
pub trait StageContext<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
