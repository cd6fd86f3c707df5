//! Crate-wide error type.
//!
//! Everything fallible in the library returns [`Result`]. Variants are grouped
//! by the subsystem that raises them; messages carry enough context (layer
//! names, parameter indices, line numbers) to act on without a debugger.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or layer received data whose dimensions do not match its spec.
    #[error("shape mismatch in {layer}: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        got: String,
    },

    /// A class label fell outside the configured output range.
    #[error("label {label} out of range (head has {classes} classes)")]
    LabelOutOfRange { label: usize, classes: usize },

    /// A gradient or parameter became NaN/inf during an update.
    #[error("non-finite {what} at parameter {index} ({layer})")]
    NonFinite {
        what: &'static str,
        index: usize,
        layer: String,
    },

    /// A backward pass was handed activations from a stale or foreign forward pass.
    #[error("stale forward trace: {0}")]
    StaleTrace(String),

    /// Invalid configuration (bad key, bad value, inconsistent options).
    #[error("configuration error: {0}")]
    Config(String),

    /// Protocol generation or bookkeeping failed (capacity, counts, structure).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A text input (file list, config file, CSV) failed to parse.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Numerical routine could not proceed (singular matrix, empty input).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Malformed or incompatible checkpoint file.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Another error annotated with where it happened (run, batch, file).
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wrap this error with location context (e.g. "run 3, batch 17").
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
