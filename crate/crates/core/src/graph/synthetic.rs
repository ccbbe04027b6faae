//! Random well-formed ASTs for verification harnesses.

use rand::seq::SliceRandom;
use rand::Rng;

use super::ast::{CanonicalAst, CanonicalAstNode, NodeKind};

const AST_TYPES: &[&str] = &[
    "Module", "Assign", "Name", "Call", "Expr", "BinOp", "Constant", "If", "Compare",
];
const IDENTIFIERS: &[&str] = &["a", "b", "x", "1", "print", "input", "n"];
const FIELDS: &[&str] = &[
    "body", "targets", "value", "args", "func", "left", "right", "test",
];

/// A random tree with `nodes` nodes rooted at a `Module` node. Every
/// identifier is a leaf; each node picks its parent uniformly among the
/// earlier AST nodes and joins one of a few field names.
pub fn random_ast<R: Rng + ?Sized>(
    rng: &mut R,
    nodes: usize,
    source_id: &str,
    label: Option<u32>,
) -> CanonicalAst {
    let nodes = nodes.max(1);
    let mut out = vec![CanonicalAstNode {
        kind: NodeKind::Ast,
        value: "Module".into(),
        fields: Vec::new(),
    }];
    let mut ast_nodes = vec![0usize];
    for i in 1..nodes {
        let parent = *ast_nodes.choose(rng).expect("root is an AST node");
        let field = *FIELDS.choose(rng).unwrap();
        let identifier = rng.gen_bool(0.35);
        let value = if identifier {
            IDENTIFIERS.choose(rng).unwrap()
        } else {
            AST_TYPES[1..].choose(rng).unwrap()
        };
        out.push(CanonicalAstNode {
            kind: if identifier {
                NodeKind::Identifier
            } else {
                NodeKind::Ast
            },
            value: value.to_string(),
            fields: Vec::new(),
        });
        if !identifier {
            ast_nodes.push(i);
        }
        let fields = &mut out[parent].fields;
        match fields.iter_mut().find(|(name, _)| name == field) {
            Some((_, children)) => children.push(i),
            None => fields.push((field.to_string(), vec![i])),
        }
    }
    CanonicalAst {
        source_id: source_id.to_string(),
        label,
        root: 0,
        nodes: out,
    }
}
