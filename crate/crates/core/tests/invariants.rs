use hdhgn::graph::synthetic::random_ast;
use hdhgn::graph::{
    apply_variant, batch_graphs, build_hdhg, decode_graph, encode_corpus, encode_graph,
    CanonicalAst, EncodedGraph, NodeKind, Variant, Vocab,
};
use hdhgn::model::{Model, ModelConfig};
use hdhgn::rng;
use hdhgn::tensor::{Index, Tape};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn tree(seed: u64, nodes: usize) -> CanonicalAst {
    random_ast(&mut rng::stream(seed, "invariants", 0), nodes, "p", Some(0))
}

fn corpus(
    seed: u64,
    count: usize,
    nodes: std::ops::Range<usize>,
) -> (Vec<CanonicalAst>, Vocab, Vec<EncodedGraph>) {
    let mut r = rng::stream(seed, "invariants", 1);
    let asts: Vec<_> = (0..count)
        .map(|i| {
            let n = r.gen_range(nodes.clone());
            random_ast(&mut r, n, &format!("g{i}"), Some((i % 3) as u32))
        })
        .collect();
    let (vocab, graphs) =
        encode_corpus(&asts, 1, vec!["a".into(), "b".into(), "c".into()]).unwrap();
    (asts, vocab, graphs)
}

fn small(variant: Variant) -> ModelConfig {
    ModelConfig {
        layers: 2,
        embed_dim: 12,
        hidden_dim: 16,
        heads: 4,
        variant,
        ..Default::default()
    }
}

/// The same tree with node `i` stored at `perm[i]`.
fn permute(ast: &CanonicalAst, perm: &[usize]) -> CanonicalAst {
    let mut nodes = ast.nodes.clone();
    for (old, node) in ast.nodes.iter().enumerate() {
        let mut moved = node.clone();
        for (_, children) in &mut moved.fields {
            children.iter_mut().for_each(|c| *c = perm[*c]);
        }
        nodes[perm[old]] = moved;
    }
    CanonicalAst {
        root: perm[ast.root],
        nodes,
        ..ast.clone()
    }
}

fn max_group_error(weights: &[f64], heads: usize, seg: &Index, count: usize) -> f64 {
    let mut sums = vec![0.0; count * heads];
    let mut seen = vec![false; count];
    for (row, &s) in seg.iter().enumerate() {
        seen[s] = true;
        for h in 0..heads {
            sums[s * heads + h] += weights[row * heads + h];
        }
    }
    let mut worst: f64 = 0.0;
    for s in (0..count).filter(|&s| seen[s]) {
        for h in 0..heads {
            worst = worst.max((sums[s * heads + h] - 1.0).abs());
        }
    }
    worst
}

fn variant_strategy() -> impl Strategy<Value = Variant> {
    prop::sample::select(Variant::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn one_hyperedge_per_nonempty_field(seed in any::<u64>(), n in 1usize..120) {
        let ast = tree(seed, n);
        let g = build_hdhg(&ast).unwrap();
        let fields: usize = ast.nodes.iter().map(|node| node.fields.iter().filter(|(_, c)| !c.is_empty()).count()).sum();
        prop_assert_eq!(g.hyperedges.len(), fields);
        prop_assert_eq!(g.tail_incidences(), ast.nodes.len() - 1);
        prop_assert!(g.hyperedges.iter().all(|e| !e.tail.is_empty() && !e.tail.contains(&e.head)));
        // identifiers are leaves: they never own a hyperedge
        prop_assert!(g.hyperedges.iter().all(|e| g.nodes[e.head].kind == NodeKind::Ast));
    }

    #[test]
    fn variants_conserve_incidences(seed in any::<u64>(), n in 1usize..80) {
        let (vocab, graphs) = encode_corpus(&[tree(seed, n)], 1, vec!["c".into()]).unwrap();
        let full = &graphs[0];
        for variant in Variant::ALL {
            let g = apply_variant(full, variant, &vocab).unwrap();
            g.check().unwrap();
            prop_assert_eq!(g.num_nodes(), full.num_nodes());
            prop_assert_eq!(g.tail_incidences(), full.tail_incidences());
            prop_assert!(g.incidence.iter().all(|i| !i.tail.is_empty() && (i.head as usize) < g.num_nodes()));
            if variant == Variant::NoHyperedge {
                prop_assert_eq!(g.num_edges(), full.tail_incidences());
                prop_assert!(g.incidence.iter().all(|i| i.tail.len() == 1));
            } else {
                prop_assert_eq!(g.num_edges(), full.num_edges());
            }
        }
    }

    #[test]
    fn vocabulary_round_trips(seed in any::<u64>()) {
        let (asts, vocab, graphs) = corpus(seed, 4, 1..40);
        for table in [&vocab.ast_values, &vocab.identifier_values, &vocab.edge_types, &vocab.label_names] {
            for (id, name) in table.items().iter().enumerate() {
                prop_assert_eq!(table.id(name), Some(id as u32));
                prop_assert_eq!(table.name(id as u32), Some(name.as_str()));
            }
        }
        for (ast, g) in asts.iter().zip(&graphs) {
            prop_assert_eq!(decode_graph(g, &vocab).unwrap(), build_hdhg(ast).unwrap());
            prop_assert_eq!(&Vocab::from_json(&vocab.to_json()).unwrap(), &vocab);
        }
    }

    #[test]
    fn predictions_ignore_node_order(seed in any::<u64>(), n in 2usize..40, variant in variant_strategy()) {
        let ast = tree(seed, n);
        let (vocab, graphs) = encode_corpus(std::slice::from_ref(&ast), 1, vec!["a".into(), "b".into()]).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng::stream(seed, "perm", 0));
        let moved = encode_graph(&build_hdhg(&permute(&ast, &perm)).unwrap(), &vocab).unwrap();
        let model = Model::<f64>::new(&small(variant), &vocab, seed).unwrap();
        let predict = |g: &EncodedGraph| {
            let g = apply_variant(g, variant, &vocab).unwrap();
            model.predict(&batch_graphs([&g]).unwrap()).unwrap()
        };
        let (a, b) = (predict(&graphs[0]), predict(&moved));
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
        }
    }

    #[test]
    fn attention_is_normalized_at_every_stage(seed in any::<u64>(), variant in variant_strategy()) {
        let (_, vocab, graphs) = corpus(seed, 3, 1..30);
        let graphs: Vec<_> = graphs.iter().map(|g| apply_variant(g, variant, &vocab).unwrap()).collect();
        let cfg = small(variant);
        let model = Model::<f64>::new(&cfg, &vocab, seed).unwrap();
        let batch = batch_graphs(&graphs).unwrap();
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let trace = model.forward(&mut tape, &vars, &batch, None).unwrap();
        let p = &trace.participants;
        let mut worst: f64 = 0.0;
        for layer in &trace.layers {
            worst = worst.max(max_group_error(tape.value(layer.edge_attn).data(), cfg.heads, &p.edge, batch.num_edges()));
            worst = worst.max(max_group_error(tape.value(layer.node_attn).data(), cfg.heads, &p.node, batch.num_nodes()));
        }
        worst = worst.max(max_group_error(tape.value(trace.pool_attn).data(), cfg.heads, &trace.node_graph, batch.num_graphs()));
        prop_assert!(worst < 1e-12, "{}", worst);
    }

    #[test]
    fn training_forward_is_deterministic(seed in any::<u64>(), variant in variant_strategy()) {
        let (_, vocab, graphs) = corpus(seed, 3, 2..25);
        let graphs: Vec<_> = graphs.iter().map(|g| apply_variant(g, variant, &vocab).unwrap()).collect();
        let model = Model::<f32>::new(&small(variant), &vocab, seed).unwrap();
        let batch = batch_graphs(&graphs).unwrap();
        let step = || model.loss_and_grad(&batch, Some(&mut rng::stream(seed, "dropout", 0))).unwrap();
        let (a, b) = (step(), step());
        prop_assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        prop_assert_eq!(a.grads, b.grads);
    }
}
