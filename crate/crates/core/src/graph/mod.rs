//! From canonical AST records to batched, encoded hypergraphs.

pub mod ast;
pub mod cache;
mod corpus;
mod encode;
mod hdhg;
pub mod synthetic;
mod vocab;

pub use ast::{read_jsonl, CanonicalAst, CanonicalAstNode, Manifest, NodeKind};
pub use corpus::{ensure_file, BuildSummary, Corpus, BUILD_FILE, GRAPHS_FILE, VOCAB_FILE};
pub use encode::{
    apply_variant, batch_graphs, decode_graph, encode_graph, BatchedGraph, EncodedGraph, Incidence,
    Variant,
};
pub use hdhg::{build_hdhg, GraphNode, HdhGraph, Hyperedge};
pub use vocab::{build_vocab, Interner, MergedValues, Vocab, UNK, UNK_ID};

use crate::error::Result;

/// Builds hypergraphs, one vocabulary over all of them, and the encodings.
pub fn encode_corpus(
    asts: &[CanonicalAst],
    min_identifier_freq: usize,
    label_names: Vec<String>,
) -> Result<(Vocab, Vec<EncodedGraph>)> {
    let graphs = asts.iter().map(build_hdhg).collect::<Result<Vec<_>>>()?;
    let vocab = build_vocab(&graphs, min_identifier_freq, label_names)?;
    let encoded = graphs
        .iter()
        .map(|g| encode_graph(g, &vocab))
        .collect::<Result<Vec<_>>>()?;
    Ok((vocab, encoded))
}
