use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::ast::NodeKind;
use super::hdhg::HdhGraph;
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const UNK_ID: u32 = 0;

/// Dense string ↔ id bijection.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interner {
    items: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn from_items(items: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(items.len());
        for (i, s) in items.iter().enumerate() {
            if index.insert(s.clone(), i as u32).is_some() {
                return Err(Error::Format {
                    what: "vocabulary",
                    reason: format!("duplicate entry `{s}`"),
                });
            }
        }
        Ok(Interner { items, index })
    }

    pub fn id(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.items.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

impl Serialize for Interner {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.items.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interner {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let items = Vec::<String>::deserialize(d)?;
        Interner::from_items(items).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocab {
    pub ast_values: Interner,
    /// Id 0 is always [`UNK`].
    pub identifier_values: Interner,
    pub edge_types: Interner,
    pub label_names: Interner,
}

/// Frequency-descending, then lexicographic.
fn ranked(counts: HashMap<&str, usize>, min_freq: usize) -> Vec<String> {
    let mut entries: Vec<(&str, usize)> =
        counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
    entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    entries.into_iter().map(|(s, _)| s.to_string()).collect()
}

/// Builds vocabularies from (training) graphs. AST values and edge types keep
/// everything seen; identifiers need `min_identifier_freq` occurrences.
pub fn build_vocab<'a, I>(
    graphs: I,
    min_identifier_freq: usize,
    label_names: Vec<String>,
) -> Result<Vocab>
where
    I: IntoIterator<Item = &'a HdhGraph>,
{
    let mut ast: HashMap<&str, usize> = HashMap::new();
    let mut ident: HashMap<&str, usize> = HashMap::new();
    let mut edges: HashMap<&str, usize> = HashMap::new();
    let mut any = false;
    for g in graphs {
        any = true;
        for n in &g.nodes {
            let table = match n.kind {
                NodeKind::Ast => &mut ast,
                NodeKind::Identifier => &mut ident,
            };
            *table.entry(n.value.as_str()).or_default() += 1;
        }
        for e in &g.hyperedges {
            *edges.entry(e.edge_type.as_str()).or_default() += 1;
        }
    }
    if !any {
        return Err(Error::EmptyCorpus);
    }
    ident.remove(UNK);
    let mut identifiers = vec![UNK.to_string()];
    identifiers.extend(ranked(ident, min_identifier_freq.max(1)));
    Ok(Vocab {
        ast_values: Interner::from_items(ranked(ast, 1))?,
        identifier_values: Interner::from_items(identifiers)?,
        edge_types: Interner::from_items(ranked(edges, 1))?,
        label_names: Interner::from_items(label_names)?,
    })
}

/// Value tables for the single-node-type ablation: AST values first, then
/// identifier values whose string is not already present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergedValues {
    pub ast_to_merged: Vec<u32>,
    pub identifier_to_merged: Vec<u32>,
    pub len: usize,
}

impl Vocab {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Vocab = serde_json::from_str(text).map_err(|e| Error::Format {
            what: "vocabulary",
            reason: e.to_string(),
        })?;
        if v.identifier_values.name(UNK_ID) != Some(UNK) {
            return Err(Error::Format {
                what: "vocabulary",
                reason: format!("identifier id 0 must be `{UNK}`"),
            });
        }
        Ok(v)
    }

    /// SHA-256 over the canonical JSON form.
    pub fn digest_bytes(&self) -> [u8; 32] {
        Sha256::digest(self.to_json().as_bytes()).into()
    }

    pub fn digest(&self) -> String {
        hex::encode(self.digest_bytes())
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn value_table(&self, kind: NodeKind) -> &Interner {
        match kind {
            NodeKind::Ast => &self.ast_values,
            NodeKind::Identifier => &self.identifier_values,
        }
    }

    pub fn merged_values(&self) -> MergedValues {
        let mut index: HashMap<&str, u32> = HashMap::new();
        let mut ast_to_merged = Vec::with_capacity(self.ast_values.len());
        for s in self.ast_values.items() {
            let next = index.len() as u32;
            ast_to_merged.push(*index.entry(s.as_str()).or_insert(next));
        }
        let mut identifier_to_merged = Vec::with_capacity(self.identifier_values.len());
        for s in self.identifier_values.items() {
            let next = index.len() as u32;
            identifier_to_merged.push(*index.entry(s.as_str()).or_insert(next));
        }
        MergedValues {
            ast_to_merged,
            identifier_to_merged,
            len: index.len(),
        }
    }
}
