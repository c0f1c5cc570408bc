use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("{stage}: {source}")]
    Pipeline {
        stage: &'static str,
        #[source]
        source: chronowarp::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    Data { path: PathBuf, reason: String },
}

impl CliError {
    /// Process exit status: 2 for configuration errors, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            _ => 3,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn data(path: &Path, reason: impl Into<String>) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    /// Converts a TOML decoding error, keeping the key path and line.
    pub fn from_toml(source: &str, e: toml::de::Error) -> Self {
        let line = e.span().map(|s| source[..s.start.min(source.len())].lines().count().max(1));
        let line = line.map(|l| {
            // A span starting right after a newline belongs to the next line.
            let start = e.span().map_or(0, |s| s.start);
            if start > 0 && source.as_bytes().get(start - 1) == Some(&b'\n') {
                l + 1
            } else {
                l
            }
        });
        CliError::Config {
            key: unknown_field(e.message()).unwrap_or_else(|| "<document>".into()),
            line,
            message: e.message().trim().to_string(),
        }
    }
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

/// Attaches a stage name to core errors.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Stage<T> for chronowarp::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Pipeline { stage, source })
    }
}
