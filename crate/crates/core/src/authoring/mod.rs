//! Spreadsheet loading, graph documents for the studio, and bundled examples.

pub mod bundled;
mod csv;
mod export;

use std::path::PathBuf;

use crate::model::ModelError;

pub use self::csv::{load_csv, parse_csv};
pub use export::{derive_edges, export_graph_document, import_graph_document, Edge, EdgeKind, GraphDocument, DOCUMENT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum AuthoringError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(String),
    #[error("required column `{0}` is missing")]
    MissingHeader(&'static str),
    #[error("unknown column `{header}`; did you mean `{suggestion}`?")]
    UnknownHeader { header: String, suggestion: String },
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("graph document: {0}")]
    Document(String),
}
