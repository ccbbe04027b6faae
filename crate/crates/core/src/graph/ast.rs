//! Canonical AST interchange records.
//!
//! One JSON object per line:
//! `{"source_id": str, "label": int?, "root": int, "nodes": [{"kind": "ast"|"identifier", "value": str, "fields": [[str, [int, ...]], ...]}]}`

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Ast,
    Identifier,
}

impl NodeKind {
    pub fn code(self) -> u8 {
        match self {
            NodeKind::Ast => 0,
            NodeKind::Identifier => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(NodeKind::Ast),
            1 => Some(NodeKind::Identifier),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalAstNode {
    pub kind: NodeKind,
    pub value: String,
    #[serde(default)]
    pub fields: Vec<(String, Vec<usize>)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalAst {
    pub source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u32>,
    pub root: usize,
    pub nodes: Vec<CanonicalAstNode>,
}

impl CanonicalAst {
    /// Checks the tree invariants: indices in range, identifiers are leaves,
    /// field names non-empty, every non-root node has exactly one parent and
    /// everything is reachable from the root.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::MalformedAst {
                source_id: self.source_id.clone(),
                reason,
            })
        };
        let n = self.nodes.len();
        if self.root >= n {
            return fail(format!("root {} out of range for {} nodes", self.root, n));
        }
        let mut parent: Vec<Option<usize>> = vec![None; n];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.kind == NodeKind::Identifier && !node.fields.is_empty() {
                return fail(format!("identifier node {i} has fields"));
            }
            for (name, children) in &node.fields {
                if name.is_empty() {
                    return fail(format!("node {i} has an empty field name"));
                }
                for &c in children {
                    if c >= n {
                        return fail(format!("node {i} field `{name}` references {c} (of {n})"));
                    }
                    if c == self.root || c == i {
                        return fail(format!("node {i} field `{name}` points back at {c}"));
                    }
                    if let Some(p) = parent[c] {
                        return fail(format!("node {c} has two parents ({p} and {i})"));
                    }
                    parent[c] = Some(i);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        let mut reached = 1;
        while let Some(i) = stack.pop() {
            for (_, children) in &self.nodes[i].fields {
                for &c in children {
                    if !seen[c] {
                        seen[c] = true;
                        reached += 1;
                        stack.push(c);
                    }
                }
            }
        }
        if reached != n {
            return fail(format!(
                "{} of {} nodes unreachable from the root",
                n - reached,
                n
            ));
        }
        Ok(())
    }
}

/// Parses one JSON line; `line` is 1-based and only used for error reports.
pub fn parse_record(text: &str, line: usize) -> Result<CanonicalAst> {
    serde_json::from_str(text).map_err(|e| Error::Schema {
        line,
        message: e.to_string(),
    })
}

/// Reads a canonical AST JSON-lines file. Blank lines are skipped; schema and
/// tree violations report the offending 1-based line.
pub fn read_jsonl(path: &Path) -> Result<Vec<CanonicalAst>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(&line, i + 1)?;
        record.validate().map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Sidecar written next to a corpus file by the extractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    pub parse_failures: u64,
    pub parser: String,
}

impl Manifest {
    /// `<corpus>.manifest.json`
    pub fn sidecar_path(corpus: &Path) -> std::path::PathBuf {
        let mut name = corpus.as_os_str().to_owned();
        name.push(".manifest.json");
        name.into()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            what: "manifest",
            reason: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A_EQUALS_1: &str = include_str!("../../tests/fixtures/a_equals_1.jsonl");

    #[test]
    fn fixture_parses_and_validates() {
        let ast = parse_record(A_EQUALS_1.trim(), 1).unwrap();
        ast.validate().unwrap();
        assert_eq!(ast.nodes.len(), 7);
        assert_eq!(ast.label, None);
        let kinds: Vec<_> = ast
            .nodes
            .iter()
            .map(|n| (n.kind, n.value.as_str()))
            .collect();
        assert!(kinds.contains(&(NodeKind::Identifier, "a")));
        assert!(kinds.contains(&(NodeKind::Identifier, "1")));
        assert!(kinds.contains(&(NodeKind::Ast, "Store")));
    }

    #[test]
    fn serialization_round_trips_byte_for_byte() {
        let ast = parse_record(A_EQUALS_1.trim(), 1).unwrap();
        assert_eq!(serde_json::to_string(&ast).unwrap(), A_EQUALS_1.trim());
    }

    fn node(kind: NodeKind, value: &str, fields: Vec<(&str, Vec<usize>)>) -> CanonicalAstNode {
        CanonicalAstNode {
            kind,
            value: value.into(),
            fields: fields
                .into_iter()
                .map(|(n, c)| (n.to_string(), c))
                .collect(),
        }
    }

    fn tree(nodes: Vec<CanonicalAstNode>) -> CanonicalAst {
        CanonicalAst {
            source_id: "t".into(),
            label: Some(0),
            root: 0,
            nodes,
        }
    }

    #[test]
    fn rejects_broken_trees() {
        use NodeKind::*;
        let dangling = tree(vec![node(Ast, "Module", vec![("body", vec![3])])]);
        assert!(matches!(
            dangling.validate(),
            Err(Error::MalformedAst { .. })
        ));

        let identifier_with_fields = tree(vec![
            node(Ast, "Module", vec![("body", vec![1])]),
            node(Identifier, "x", vec![("oops", vec![])]),
        ]);
        assert!(identifier_with_fields.validate().is_err());

        let two_parents = tree(vec![
            node(Ast, "Module", vec![("body", vec![1, 2])]),
            node(Ast, "Expr", vec![("value", vec![2])]),
            node(Ast, "Pass", vec![]),
        ]);
        assert!(two_parents.validate().is_err());

        let unreachable = tree(vec![node(Ast, "Module", vec![]), node(Ast, "Pass", vec![])]);
        assert!(unreachable.validate().is_err());

        let cycle = tree(vec![
            node(Ast, "Module", vec![]),
            node(Ast, "A", vec![("x", vec![2])]),
            node(Ast, "B", vec![("y", vec![1])]),
        ]);
        assert!(cycle.validate().is_err());
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let err = parse_record("{\"source_id\": 3}", 9).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 9, .. }));
    }
}
