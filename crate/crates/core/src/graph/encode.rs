use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ast::NodeKind;
use super::hdhg::{GraphNode, HdhGraph, Hyperedge};
use super::vocab::{Vocab, UNK_ID};
use crate::error::{Error, Result};

/// Model/graph variant: the full model and the three ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Star expansion: every k-tail hyperedge becomes k single-tail edges.
    NoHyperedge,
    /// One node type, one edge type, merged value vocabulary.
    NoHetero,
    /// Head and tail roles share their message projections.
    NoDirection,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoHyperedge,
        Variant::NoHetero,
        Variant::NoDirection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoHyperedge => "no_hyperedge",
            Variant::NoHetero => "no_hetero",
            Variant::NoDirection => "no_direction",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incidence {
    pub tail: Vec<u32>,
    pub head: u32,
}

/// A hypergraph with every string replaced by its vocabulary id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedGraph {
    pub source_id: String,
    /// [`NodeKind::code`]; all zero under [`Variant::NoHetero`].
    pub node_kind: Vec<u8>,
    pub node_value: Vec<u32>,
    pub edge_type: Vec<u32>,
    pub incidence: Vec<Incidence>,
    pub label: Option<u32>,
    pub variant: Variant,
}

impl EncodedGraph {
    pub fn num_nodes(&self) -> usize {
        self.node_kind.len()
    }

    pub fn num_edges(&self) -> usize {
        self.incidence.len()
    }

    /// Number of (tail, head) pairs.
    pub fn tail_incidences(&self) -> usize {
        self.incidence.iter().map(|e| e.tail.len()).sum()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.num_nodes() as u32;
        let bad = |reason: String| {
            Err(Error::MalformedGraph {
                source_id: self.source_id.clone(),
                reason,
            })
        };
        if self.node_value.len() != self.node_kind.len()
            || self.edge_type.len() != self.incidence.len()
        {
            return bad("per-node or per-edge arrays have inconsistent lengths".into());
        }
        for (i, e) in self.incidence.iter().enumerate() {
            if e.tail.is_empty() || e.head >= n || e.tail.iter().any(|&t| t >= n || t == e.head) {
                return bad(format!(
                    "hyperedge {i} violates the B-hypergraph invariants"
                ));
            }
            let mut t = e.tail.clone();
            t.sort_unstable();
            t.dedup();
            if t.len() != e.tail.len() {
                return bad(format!("hyperedge {i} repeats a tail node"));
            }
        }
        Ok(())
    }
}

/// Maps strings through `vocab`. Unknown identifiers become UNK; unknown AST
/// node types or edge types are grammar-level mismatches and fail.
pub fn encode_graph(g: &HdhGraph, vocab: &Vocab) -> Result<EncodedGraph> {
    let mut node_kind = Vec::with_capacity(g.nodes.len());
    let mut node_value = Vec::with_capacity(g.nodes.len());
    for n in &g.nodes {
        let id = match n.kind {
            NodeKind::Ast => vocab.ast_values.id(&n.value).ok_or_else(|| {
                Error::Encoding(format!(
                    "`{}`: AST node type `{}` not in vocabulary",
                    g.source_id, n.value
                ))
            })?,
            NodeKind::Identifier => vocab.identifier_values.id(&n.value).unwrap_or(UNK_ID),
        };
        node_kind.push(n.kind.code());
        node_value.push(id);
    }
    let mut edge_type = Vec::with_capacity(g.hyperedges.len());
    let mut incidence = Vec::with_capacity(g.hyperedges.len());
    for e in &g.hyperedges {
        let id = vocab.edge_types.id(&e.edge_type).ok_or_else(|| {
            Error::Encoding(format!(
                "`{}`: edge type `{}` not in vocabulary",
                g.source_id, e.edge_type
            ))
        })?;
        edge_type.push(id);
        incidence.push(Incidence {
            tail: e.tail.iter().map(|&t| t as u32).collect(),
            head: e.head as u32,
        });
    }
    if let Some(label) = g.label {
        if label as usize >= vocab.num_classes() {
            return Err(Error::LabelOutOfRange {
                label: label as usize,
                classes: vocab.num_classes(),
            });
        }
    }
    let encoded = EncodedGraph {
        source_id: g.source_id.clone(),
        node_kind,
        node_value,
        edge_type,
        incidence,
        label: g.label,
        variant: Variant::Full,
    };
    encoded.check()?;
    Ok(encoded)
}

/// Inverse of [`encode_graph`] for full-variant graphs.
pub fn decode_graph(g: &EncodedGraph, vocab: &Vocab) -> Result<HdhGraph> {
    if g.variant != Variant::Full {
        return Err(Error::Encoding(format!(
            "cannot decode a `{}` graph",
            g.variant
        )));
    }
    let oob = |what: &str, id: u32| {
        Error::Encoding(format!(
            "`{}`: {what} id {id} not in vocabulary",
            g.source_id
        ))
    };
    let nodes = g
        .node_kind
        .iter()
        .zip(&g.node_value)
        .map(|(&k, &v)| {
            let kind = NodeKind::from_code(k).ok_or_else(|| oob("node kind", k as u32))?;
            let value = vocab
                .value_table(kind)
                .name(v)
                .ok_or_else(|| oob("value", v))?;
            Ok(GraphNode {
                kind,
                value: value.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    let hyperedges = g
        .incidence
        .iter()
        .zip(&g.edge_type)
        .map(|(inc, &t)| {
            Ok(Hyperedge {
                edge_type: vocab
                    .edge_types
                    .name(t)
                    .ok_or_else(|| oob("edge type", t))?
                    .to_string(),
                tail: inc.tail.iter().map(|&x| x as usize).collect(),
                head: inc.head as usize,
            })
        })
        .collect::<Result<_>>()?;
    Ok(HdhGraph {
        source_id: g.source_id.clone(),
        nodes,
        hyperedges,
        label: g.label,
    })
}

/// Rewrites a full-variant graph for an ablation.
pub fn apply_variant(g: &EncodedGraph, variant: Variant, vocab: &Vocab) -> Result<EncodedGraph> {
    if variant == Variant::Full {
        return Ok(g.clone());
    }
    if g.variant != Variant::Full {
        return Err(Error::Encoding(format!(
            "`{}` is already a `{}` graph",
            g.source_id, g.variant
        )));
    }
    let mut out = g.clone();
    out.variant = variant;
    match variant {
        Variant::Full | Variant::NoDirection => {}
        Variant::NoHyperedge => {
            out.incidence.clear();
            out.edge_type.clear();
            for (inc, &t) in g.incidence.iter().zip(&g.edge_type) {
                for &s in &inc.tail {
                    out.incidence.push(Incidence {
                        tail: vec![s],
                        head: inc.head,
                    });
                    out.edge_type.push(t);
                }
            }
        }
        Variant::NoHetero => {
            let merged = vocab.merged_values();
            for (k, v) in out.node_kind.iter_mut().zip(out.node_value.iter_mut()) {
                let table = match NodeKind::from_code(*k) {
                    Some(NodeKind::Ast) => &merged.ast_to_merged,
                    _ => &merged.identifier_to_merged,
                };
                *v = *table
                    .get(*v as usize)
                    .ok_or_else(|| Error::Encoding(format!("value id {v} out of range")))?;
                *k = 0;
            }
            out.edge_type.iter_mut().for_each(|t| *t = 0);
        }
    }
    Ok(out)
}

/// Disjoint union of encoded graphs with per-node graph membership.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchedGraph {
    pub node_kind: Vec<u8>,
    pub node_value: Vec<u32>,
    pub node_graph: Vec<u32>,
    pub edge_type: Vec<u32>,
    pub incidence: Vec<Incidence>,
    /// Offsets into the node arrays, `num_graphs + 1` entries.
    pub node_offsets: Vec<usize>,
    /// Offsets into the edge arrays, `num_graphs + 1` entries.
    pub edge_offsets: Vec<usize>,
    pub labels: Vec<Option<u32>>,
    pub source_ids: Vec<String>,
    pub variant: Variant,
}

impl BatchedGraph {
    pub fn num_graphs(&self) -> usize {
        self.labels.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_kind.len()
    }

    pub fn num_edges(&self) -> usize {
        self.incidence.len()
    }

    /// Labels of every graph, failing if any is missing.
    pub fn required_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .zip(&self.source_ids)
            .map(|(l, s)| {
                l.map(|l| l as usize)
                    .ok_or_else(|| Error::Encoding(format!("graph `{s}` has no label")))
            })
            .collect()
    }

    /// Recovers graph `i` with local indices.
    pub fn graph(&self, i: usize) -> EncodedGraph {
        let (n0, n1) = (self.node_offsets[i], self.node_offsets[i + 1]);
        let (e0, e1) = (self.edge_offsets[i], self.edge_offsets[i + 1]);
        let shift = n0 as u32;
        EncodedGraph {
            source_id: self.source_ids[i].clone(),
            node_kind: self.node_kind[n0..n1].to_vec(),
            node_value: self.node_value[n0..n1].to_vec(),
            edge_type: self.edge_type[e0..e1].to_vec(),
            incidence: self.incidence[e0..e1]
                .iter()
                .map(|inc| Incidence {
                    tail: inc.tail.iter().map(|t| t - shift).collect(),
                    head: inc.head - shift,
                })
                .collect(),
            label: self.labels[i],
            variant: self.variant,
        }
    }
}

pub fn batch_graphs<'a, I>(graphs: I) -> Result<BatchedGraph>
where
    I: IntoIterator<Item = &'a EncodedGraph>,
{
    let mut b = BatchedGraph {
        node_kind: Vec::new(),
        node_value: Vec::new(),
        node_graph: Vec::new(),
        edge_type: Vec::new(),
        incidence: Vec::new(),
        node_offsets: vec![0],
        edge_offsets: vec![0],
        labels: Vec::new(),
        source_ids: Vec::new(),
        variant: Variant::Full,
    };
    for (gi, g) in graphs.into_iter().enumerate() {
        if gi == 0 {
            b.variant = g.variant;
        } else if g.variant != b.variant {
            return Err(Error::VariantMismatch {
                expected: b.variant.to_string(),
                found: g.variant.to_string(),
            });
        }
        let shift = b.node_kind.len() as u32;
        b.node_kind.extend_from_slice(&g.node_kind);
        b.node_value.extend_from_slice(&g.node_value);
        b.node_graph
            .extend(std::iter::repeat_n(gi as u32, g.num_nodes()));
        b.edge_type.extend_from_slice(&g.edge_type);
        b.incidence.extend(g.incidence.iter().map(|inc| Incidence {
            tail: inc.tail.iter().map(|t| t + shift).collect(),
            head: inc.head + shift,
        }));
        b.node_offsets.push(b.node_kind.len());
        b.edge_offsets.push(b.incidence.len());
        b.labels.push(g.label);
        b.source_ids.push(g.source_id.clone());
    }
    if b.labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(b)
}
