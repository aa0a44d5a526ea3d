//! Error type shared by every module, with a stable process exit-code mapping.

use std::path::PathBuf;

/// Toolkit-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameter or configuration value (divisibility violations,
    /// out-of-range settings, malformed headers or config files).
    #[error("configuration error: {0}")]
    Config(String),

    /// Inputs whose shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A required input file or artifact is absent.
    #[error("missing input: {0}")]
    MissingInput(String),

    /// An iterative routine produced a non-finite value.
    #[error("numerical divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    /// Data that is structurally valid but unusable (no labeled pixels,
    /// a class too small to split, negative intensities for Poisson noise).
    #[error("data error: {0}")]
    Data(String),

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code contract: 0 success, 2 configuration, 3 missing
    /// input, 4 numerical divergence, 5 data pathology, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dimension(_) => 2,
            Error::MissingInput(_) => 3,
            Error::Divergence { .. } => 4,
            Error::Data(_) => 5,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
            Error::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Dimension("x".into()).exit_code(), 2);
        assert_eq!(Error::MissingInput("x".into()).exit_code(), 3);
        assert_eq!(
            Error::Divergence {
                iteration: 3,
                detail: "x".into()
            }
            .exit_code(),
            4
        );
        assert_eq!(Error::Data("x".into()).exit_code(), 5);
    }

    #[test]
    fn divergence_message_names_iteration() {
        let e = Error::Divergence {
            iteration: 17,
            detail: "NaN in iterate".into(),
        };
        assert!(e.to_string().contains("iteration 17"));
    }
}
