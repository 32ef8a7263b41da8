//! MeSH descriptor vocabulary, the parent/child label graph, and initial label
//! embeddings averaged from word vectors.

mod adjacency;
mod embeddings;
mod vocabulary;

pub use adjacency::{AdjacencyMatrix, AdjacencyStats};
pub use embeddings::{init_label_embeddings, label_tokens, LabelMatrix, WordEmbeddings};
pub use vocabulary::{MeshDescriptor, MeshVocabulary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate descriptor {ui}")]
    DuplicateDescriptor { line: usize, ui: String },
    #[error("descriptor {0} has an empty name")]
    EmptyName(String),
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
