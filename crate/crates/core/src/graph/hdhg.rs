use serde::{Deserialize, Serialize};

use super::ast::{CanonicalAst, NodeKind};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub kind: NodeKind,
    pub value: String,
}

/// Directed hyperedge: every tail node points at the single head node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperedge {
    pub edge_type: String,
    pub tail: Vec<usize>,
    pub head: usize,
}

/// Heterogeneous directed B-hypergraph of one program.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdhGraph {
    pub source_id: String,
    pub nodes: Vec<GraphNode>,
    pub hyperedges: Vec<Hyperedge>,
    pub label: Option<u32>,
}

impl HdhGraph {
    /// Total number of (tail, head) incidences.
    pub fn tail_incidences(&self) -> usize {
        self.hyperedges.iter().map(|e| e.tail.len()).sum()
    }

    /// Structural invariants: non-empty tails, distinct tail members, head
    /// not in its own tail, all indices in range.
    pub fn check(&self) -> Result<()> {
        let n = self.nodes.len();
        for (i, e) in self.hyperedges.iter().enumerate() {
            let bad = |reason: String| {
                Err(Error::MalformedGraph {
                    source_id: self.source_id.clone(),
                    reason: format!("hyperedge {i} (`{}`): {reason}", e.edge_type),
                })
            };
            if e.tail.is_empty() {
                return bad("empty tail".into());
            }
            if e.head >= n {
                return bad(format!("head {} out of range", e.head));
            }
            let mut sorted = e.tail.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != e.tail.len() {
                return bad("repeated tail node".into());
            }
            if sorted.last().is_some_and(|&t| t >= n) {
                return bad("tail index out of range".into());
            }
            if sorted.binary_search(&e.head).is_ok() {
                return bad("head is also a tail".into());
            }
        }
        Ok(())
    }
}

/// One node per AST node (order preserved), one hyperedge per non-empty
/// field: the field's children form the tail, the owning node is the head,
/// and the field name is the edge type.
pub fn build_hdhg(ast: &CanonicalAst) -> Result<HdhGraph> {
    ast.validate()?;
    let nodes = ast
        .nodes
        .iter()
        .map(|n| GraphNode {
            kind: n.kind,
            value: n.value.clone(),
        })
        .collect();
    let hyperedges = ast
        .nodes
        .iter()
        .enumerate()
        .flat_map(|(parent, n)| {
            n.fields
                .iter()
                .filter(|(_, children)| !children.is_empty())
                .map(move |(name, children)| Hyperedge {
                    edge_type: name.clone(),
                    tail: children.clone(),
                    head: parent,
                })
        })
        .collect();
    Ok(HdhGraph {
        source_id: ast.source_id.clone(),
        nodes,
        hyperedges,
        label: ast.label,
    })
}
