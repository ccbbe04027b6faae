use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("malformed AST `{source_id}`: {reason}")]
    MalformedAst { source_id: String, reason: String },

    #[error("malformed hypergraph `{source_id}`: {reason}")]
    MalformedGraph { source_id: String, reason: String },

    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("cannot batch zero graphs")]
    EmptyBatch,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFiniteValue { op: &'static str },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("{table} id {id} out of range (table has {rows} rows)")]
    IdOutOfRange {
        table: &'static str,
        id: usize,
        rows: usize,
    },

    #[error("graph variant {found} does not match model variant {expected}")]
    VariantMismatch { expected: String, found: String },

    #[error("vocabulary digest mismatch: expected {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error("invalid {what} file: {reason}")]
    Format { what: &'static str, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}
