//! Reference forward pass with explicit dense incidence matrices and no
//! segment operations, written from the layer equations independently of the
//! library's tape implementation.

use hdhgn::graph::{BatchedGraph, Variant};
use hdhgn::model::Model;
use nalgebra::DMatrix;

pub struct DenseTrace {
    pub h0: DMatrix<f64>,
    /// Node states after each layer.
    pub layers: Vec<DMatrix<f64>>,
    /// Pooled graph readouts.
    pub r: DMatrix<f64>,
    pub logits: DMatrix<f64>,
}

struct Weights<'a>(&'a Model<f64>);

impl Weights<'_> {
    fn get(&self, name: &str) -> DMatrix<f64> {
        let t = self
            .0
            .params()
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        let (rows, cols) = match t.shape() {
            [c] => (1, *c),
            [r, c] => (*r, *c),
            s => panic!("unexpected shape {s:?}"),
        };
        DMatrix::from_row_slice(rows, cols, t.data())
    }
}

fn add_bias(mut y: DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    for mut row in y.row_iter_mut() {
        row += b;
    }
    y
}

/// `x W + 1 bᵀ`.
fn affine(x: &DMatrix<f64>, w: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    add_bias(x * w, b)
}

fn elu(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.map(|v| if v > 0.0 { v } else { v.exp_m1() })
}

fn one_hot(ids: impl Iterator<Item = usize>, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for (r, c) in ids.enumerate() {
        m[(r, c)] = 1.0;
    }
    m
}

/// Multi-head masked attention. `queries` has one row per receiver; each
/// `(mask, keys, values)` source has one column of `mask` (receivers
/// × senders) per sender row. Softmax runs per receiver and head over every
/// sender the masks admit; receivers with no sender get zero.
fn attend(
    queries: &DMatrix<f64>,
    sources: &[(&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>)],
    heads: usize,
    scale: f64,
) -> DMatrix<f64> {
    let width = queries.ncols();
    let d = width / heads;
    let mut out = DMatrix::zeros(queries.nrows(), width);
    for h in 0..heads {
        let q = queries.columns(h * d, d);
        let scores: Vec<DMatrix<f64>> = sources
            .iter()
            .map(|(_, k, _)| (q * k.columns(h * d, d).transpose()) * scale)
            .collect();
        for r in 0..queries.nrows() {
            let mut max = f64::NEG_INFINITY;
            for ((mask, _, _), s) in sources.iter().zip(&scores) {
                for c in 0..mask.ncols() {
                    if mask[(r, c)] != 0.0 {
                        max = max.max(s[(r, c)]);
                    }
                }
            }
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for ((mask, _, _), s) in sources.iter().zip(&scores) {
                for c in (0..mask.ncols()).filter(|&c| mask[(r, c)] != 0.0) {
                    total += (s[(r, c)] - max).exp();
                }
            }
            for ((mask, _, v), s) in sources.iter().zip(&scores) {
                for c in (0..mask.ncols()).filter(|&c| mask[(r, c)] != 0.0) {
                    let a = (s[(r, c)] - max).exp() / total;
                    for j in 0..d {
                        out[(r, h * d + j)] += a * v[(c, h * d + j)];
                    }
                }
            }
        }
    }
    out
}

/// Per-graph, per-channel normalization with a learned mean shift.
fn graph_norm(
    x: &DMatrix<f64>,
    membership: &DMatrix<f64>,
    alpha: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    eps: f64,
) -> DMatrix<f64> {
    // membership: graphs × nodes
    let sizes: Vec<f64> = membership.row_iter().map(|r| r.sum()).collect();
    let mut mean = membership * x;
    for (g, mut row) in mean.row_iter_mut().enumerate() {
        row /= sizes[g];
    }
    let node_mean = membership.transpose() * &mean;
    let mut shifted = x.clone();
    for n in 0..x.nrows() {
        for c in 0..x.ncols() {
            shifted[(n, c)] -= alpha[(0, c)] * node_mean[(n, c)];
        }
    }
    let mut var = membership * shifted.map(|v| v * v);
    for (g, mut row) in var.row_iter_mut().enumerate() {
        row /= sizes[g];
    }
    let node_var = membership.transpose() * &var;
    let mut out = shifted;
    for n in 0..x.nrows() {
        for c in 0..x.ncols() {
            out[(n, c)] =
                gamma[(0, c)] * out[(n, c)] / (node_var[(n, c)] + eps).sqrt() + beta[(0, c)];
        }
    }
    out
}

pub fn dense_forward(model: &Model<f64>, batch: &BatchedGraph, eps: f64) -> DenseTrace {
    let cfg = model.config();
    let w = Weights(model);
    let n = batch.num_nodes();
    let e = batch.num_edges();
    let graphs = batch.num_graphs();
    let heads = cfg.heads;
    let scale = 1.0 / (cfg.hidden_dim as f64).sqrt();

    // tail[e, n] = 1 when n is a child of e; head[e, n] = 1 when n owns e.
    let mut tail = DMatrix::zeros(e, n);
    let mut head = DMatrix::zeros(e, n);
    for (i, inc) in batch.incidence.iter().enumerate() {
        for &t in &inc.tail {
            tail[(i, t as usize)] = 1.0;
        }
        head[(i, inc.head as usize)] = 1.0;
    }
    let membership = one_hot(batch.node_graph.iter().map(|&g| g as usize), n, graphs).transpose();

    let tables = &model.sizes().node_tables;
    let mut h = DMatrix::zeros(n, cfg.hidden_dim);
    for (code, (kind, rows)) in tables.iter().enumerate() {
        let embed = w.get(&format!("embed.{kind}"));
        let selector = {
            let mut m = DMatrix::zeros(n, *rows);
            for (i, (&k, &v)) in batch.node_kind.iter().zip(&batch.node_value).enumerate() {
                if k as usize == code {
                    m[(i, v as usize)] = 1.0;
                }
            }
            m
        };
        let mask = DMatrix::from_fn(n, 1, |i, _| {
            if batch.node_kind[i] as usize == code {
                1.0
            } else {
                0.0
            }
        });
        let projected = affine(
            &(&selector * embed),
            &w.get(&format!("project.{kind}.weight")),
            &w.get(&format!("project.{kind}.bias")),
        );
        for i in 0..n {
            if mask[(i, 0)] != 0.0 {
                h.set_row(i, &projected.row(i));
            }
        }
    }
    let h0 = h.clone();

    let types = one_hot(
        batch.edge_type.iter().map(|&t| t as usize),
        e,
        model.sizes().edge_types,
    );
    let d_e = &types * w.get("embed.edge");
    let (tail_role, head_role) = if cfg.variant == Variant::NoDirection {
        ("shared", "shared")
    } else {
        ("tail", "head")
    };

    let mut layers = Vec::new();
    for l in 0..cfg.layers {
        let p = |s: &str| w.get(&format!("layers.{l}.{s}"));

        // nodes -> hyperedges
        let m_tail = affine(
            &h,
            &p(&format!("node_to_edge.{tail_role}.weight")),
            &p(&format!("node_to_edge.{tail_role}.bias")),
        );
        let m_head = affine(
            &h,
            &p(&format!("node_to_edge.{head_role}.weight")),
            &p(&format!("node_to_edge.{head_role}.bias")),
        );
        let query = &d_e * p("attn1.query");
        let (k1, v1) = (p("attn1.key"), p("attn1.value"));
        let o = attend(
            &query,
            &[
                (&tail, &(&m_tail * &k1), &(&m_tail * &v1)),
                (&head, &(&m_head * &k1), &(&m_head * &v1)),
            ],
            heads,
            scale,
        );
        let z = affine(&d_e, &p("edge_type.weight"), &p("edge_type.bias"));
        let q = o + z;

        // hyperedges -> nodes; the projection follows the receiving node's role
        let to_tail = affine(
            &q,
            &p(&format!("edge_to_node.{tail_role}.weight")),
            &p(&format!("edge_to_node.{tail_role}.bias")),
        );
        let to_head = affine(
            &q,
            &p(&format!("edge_to_node.{head_role}.weight")),
            &p(&format!("edge_to_node.{head_role}.bias")),
        );
        let node_query = &h * p("attn2.query");
        let (k2, v2) = (p("attn2.key"), p("attn2.value"));
        let v = attend(
            &node_query,
            &[
                (&tail.transpose(), &(&to_tail * &k2), &(&to_tail * &v2)),
                (&head.transpose(), &(&to_head * &k2), &(&to_head * &v2)),
            ],
            heads,
            scale,
        );
        let u = add_bias(
            &v * p("update.agg") + &h * p("update.self"),
            &p("update.bias"),
        );
        let normed = graph_norm(
            &u,
            &membership,
            &p("norm.alpha"),
            &p("norm.gamma"),
            &p("norm.beta"),
            eps,
        );
        h = elu(&normed);
        layers.push(h.clone());
    }

    // attention pooling: one score per node and head, softmax over the graph
    let g = w.get("pool.query");
    let pool_query = DMatrix::from_fn(graphs, cfg.hidden_dim, |_, c| g[(0, c)]);
    let r = attend(&pool_query, &[(&membership, &h, &h)], heads, 1.0);
    let hidden = elu(&affine(
        &r,
        &w.get("mlp.hidden.weight"),
        &w.get("mlp.hidden.bias"),
    ));
    let logits = affine(&hidden, &w.get("mlp.out.weight"), &w.get("mlp.out.bias"));
    DenseTrace {
        h0,
        layers,
        r,
        logits,
    }
}
