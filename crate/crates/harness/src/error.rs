use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Unreadable or invalid configuration. `line` is 1-based when known.
    #[error("{}", config_message(path, *line, field, message))]
    Config {
        path: PathBuf,
        line: Option<usize>,
        field: Option<String>,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] massart_core::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn config_message(path: &std::path::Path, line: Option<usize>, field: &Option<String>, message: &str) -> String {
    let mut s = format!("config error: {}", path.display());
    if let Some(l) = line {
        s.push_str(&format!(":{l}"));
    }
    if let Some(f) = field {
        s.push_str(&format!(": field `{f}`"));
    }
    s.push_str(": ");
    s.push_str(message);
    s
}

impl HarnessError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Config {
            path: PathBuf::new(),
            line: None,
            field: Some(field.into()),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit status for the CLI: 1 for everything that stops a run before
    /// trials complete.
    pub fn exit_code(&self) -> i32 {
        1
    }
}
