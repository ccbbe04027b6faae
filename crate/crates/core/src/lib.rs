//! Code classification over heterogeneous directed hypergraphs.
//!
//! Program ASTs (in the canonical JSON-lines interchange format) are turned
//! into B-hypergraphs whose nodes are AST or identifier nodes and whose typed
//! hyperedges point from a field's children to the owning node. A stacked
//! two-stage attention network over those hypergraphs is trained with a
//! small reverse-mode engine written for this crate.
//!
//! Modules:
//! - [`graph`]: AST records, hypergraph construction, vocabularies, encoding,
//!   batching, ablation variants and the binary dataset cache.
//! - [`tensor`]: dense tensors, autodiff tape, Adam.
//! - [`model`]: the network (embeddings, convolution layers, pooling, MLP).
//! - [`train`]: splits, training loop, evaluation, trials, ablation,
//!   gradient checking.
//! - [`checkpoint`]: parameter/config/vocab container format.

pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
