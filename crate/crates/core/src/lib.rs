//! MeSH indexing from full-text articles.
//!
//! [`corpus`] builds the dataset from BioC and MEDLINE XML, [`mesh`] loads the
//! descriptor hierarchy, [`model`] holds the network and its training loop on
//! top of the [`tensor`] autodiff engine, and [`eval`] scores predictions.
//! [`synthetic`] generates seeded toy corpora for tests and examples.

pub mod corpus;
pub mod synthetic;
pub mod tensor;
pub mod mesh;
pub mod model;
pub mod eval;

/// The guide's chapters, compiled so their snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/label-graph.md")]
    mod label_graph {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
