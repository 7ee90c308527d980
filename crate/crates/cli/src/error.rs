use std::path::PathBuf;

/// Anything that can stop a run, tagged with enough context to find the
/// offending file, line, or stage.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// A required input file is missing or unreadable.
    #[error("cannot read {path}: {source}")]
    Ingest {
        path: PathBuf,
        source: std::io::Error,
    },

    /// A file exists but its content is unusable; names file and line.
    #[error("{file}:{line}: {message}")]
    Validation {
        file: PathBuf,
        line: u64,
        message: String,
    },

    /// An output location cannot be written.
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// The configuration is self-inconsistent or out of range.
    #[error("config: {0}")]
    Config(String),

    /// Parsed inputs violate a cross-file dataset invariant.
    #[error("invalid dataset: {0}")]
    Invalid(String),

    /// A pipeline stage failed; wraps the cause with the stage name.
    #[error("stage {stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn stage(stage: &'static str, err: impl std::fmt::Display) -> Self {
        CliError::Stage {
            stage,
            message: err.to_string(),
        }
    }
}
