use std::fmt;
use std::path::PathBuf;

/// Pipeline stage an error surfaced from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Simulate,
    Prior,
    Align,
    Seed,
    Track,
    Optimize,
    Map,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Simulate,
        Stage::Prior,
        Stage::Align,
        Stage::Seed,
        Stage::Track,
        Stage::Optimize,
        Stage::Map,
        Stage::Eval,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Prior => "prior",
            Stage::Align => "align",
            Stage::Seed => "seed",
            Stage::Track => "track",
            Stage::Optimize => "optimize",
            Stage::Map => "map",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{stage} stage: {source}")]
    Pipeline {
        stage: Stage,
        #[source]
        source: splatpose_core::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("no metrics.csv found under {0}")]
    MissingRuns(PathBuf),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl fmt::Display) -> Self {
        Error::Format { path: path.into(), message: message.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Attaches a stage to core errors.
pub(crate) trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

impl<T> AtStage<T> for splatpose_core::Result<T> {
    fn at(self, stage: Stage) -> Result<T> {
        self.map_err(|source| Error::Pipeline { stage, source })
    }
}
