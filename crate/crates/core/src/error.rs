use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the parsing toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("rs3 error: {0}")]
    Rs3(String),

    #[error("tree has no linked units")]
    EmptyTree,

    #[error("malformed tree: {0}")]
    Tree(String),

    #[error("unmapped relation {relation:?} in treebank {treebank:?}")]
    Mapping { treebank: String, relation: String },

    #[error("relation map: {0}")]
    RelationMap(String),

    #[error("document error: {0}")]
    Document(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("trace error at step {step}: {message}")]
    Trace { step: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("segmentation error in {doc_id}: {message}")]
    Segmentation { doc_id: String, message: String },

    #[error("translation client error: {0}")]
    Client(String),

    #[error("seed sweep: {0}")]
    Sweep(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
