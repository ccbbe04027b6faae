#![allow(dead_code)]

pub mod dense;

use std::path::PathBuf;
use std::process::{Command, Output};

use hdhgn::graph::synthetic::random_ast;
use hdhgn::graph::CanonicalAst;
use hdhgn::rng;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

pub fn hdhgn() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hdhgn"));
    c.env_remove("HDHGN_CACHE_DIR");
    c
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `count` random labelled trees with `nodes` drawn from the range.
pub fn random_asts(
    seed: u64,
    count: usize,
    nodes: std::ops::RangeInclusive<usize>,
    classes: u32,
) -> Vec<CanonicalAst> {
    let mut r = rng::stream(seed, "test-corpus", 0);
    (0..count)
        .map(|i| {
            let n = r.gen_range(nodes.clone());
            let label = r.gen_range(0..classes);
            random_ast(&mut r, n, &format!("g{i}"), Some(label))
        })
        .collect()
}

/// The same tree with its nodes stored in the order `perm` (old index →
/// new index); child lists keep their order.
pub fn permute(ast: &CanonicalAst, perm: &[usize]) -> CanonicalAst {
    let mut nodes = ast.nodes.clone();
    for (old, node) in ast.nodes.iter().enumerate() {
        let mut moved = node.clone();
        for (_, children) in &mut moved.fields {
            for c in children.iter_mut() {
                *c = perm[*c];
            }
        }
        nodes[perm[old]] = moved;
    }
    CanonicalAst {
        source_id: ast.source_id.clone(),
        label: ast.label,
        root: perm[ast.root],
        nodes,
    }
}
