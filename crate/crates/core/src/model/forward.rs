use std::sync::Arc;

use rand::RngCore;

use super::config::{ModelConfig, TableSizes};
use super::params::{layout, roles, Params};
use crate::error::{Error, Result};
use crate::graph::{BatchedGraph, Vocab};
use crate::tensor::{softmax_rows, Gradients, Index, Scalar, Tape, Tensor, Var};

pub const GRAPH_NORM_EPS: f64 = 1e-5;

/// Flattened (hyperedge, node) participation list of a batch.
///
/// Each hyperedge contributes its tail nodes in order followed by its head.
/// The same list drives both stages: stage 1 normalizes over rows sharing an
/// edge, stage 2 over rows sharing a node.
#[derive(Clone, Debug)]
pub struct Participants {
    pub node: Index,
    pub edge: Index,
    pub is_head: Arc<[bool]>,
}

impl Participants {
    pub fn new(batch: &BatchedGraph) -> Self {
        let total = batch.incidence.iter().map(|i| i.tail.len() + 1).sum();
        let mut node = Vec::with_capacity(total);
        let mut edge = Vec::with_capacity(total);
        let mut is_head = Vec::with_capacity(total);
        for (e, inc) in batch.incidence.iter().enumerate() {
            for &t in &inc.tail {
                node.push(t as usize);
                edge.push(e);
                is_head.push(false);
            }
            node.push(inc.head as usize);
            edge.push(e);
            is_head.push(true);
        }
        Participants {
            node: node.into(),
            edge: edge.into(),
            is_head: is_head.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node.is_empty()
    }

    /// Row index into `[by_tail; by_head]` stacked tables of `rows` rows each.
    fn role_index(&self, base: &[usize], rows: usize) -> Index {
        base.iter()
            .zip(self.is_head.iter())
            .map(|(&i, &h)| if h { i + rows } else { i })
            .collect()
    }
}

/// Tape handles for one layer.
#[derive(Clone, Debug)]
pub struct LayerVars {
    /// Node-to-edge values (projected message times the value map), one
    /// row per participant.
    pub node_msg: Var,
    /// Stage-1 attention `[participants, heads]`.
    pub edge_attn: Var,
    pub o: Var,
    pub z: Var,
    pub q: Var,
    /// Edge-to-node values, one row per participant.
    pub edge_msg: Var,
    /// Stage-2 attention `[participants, heads]`.
    pub node_attn: Var,
    pub v: Var,
    pub h: Var,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub participants: Participants,
    pub node_graph: Index,
    pub h0: Var,
    pub layers: Vec<LayerVars>,
    /// Pooling attention `[nodes, heads]`.
    pub pool_attn: Var,
    pub r: Var,
    pub logits: Var,
}

/// Parameters bound as leaves of one tape.
struct Bound<'a, T: Scalar> {
    params: &'a Params<T>,
    vars: Vec<Var>,
}

impl<T: Scalar> Bound<'_, T> {
    fn var(&self, name: &str) -> Var {
        let i = self
            .params
            .position(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from layout"));
        self.vars[i]
    }
}

/// One step's loss, gradients in parameter order, and logits.
pub struct Step<T> {
    pub loss: f64,
    pub grads: Vec<Tensor<T>>,
    pub logits: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    sizes: TableSizes,
    params: Params<T>,
}

impl<T: Scalar> Model<T> {
    /// Fresh model; `num_classes` is taken from the vocabulary when unset.
    pub fn new(config: &ModelConfig, vocab: &Vocab, seed: u64) -> Result<Self> {
        let config = config.resolved(vocab);
        config.validate()?;
        let sizes = TableSizes::new(vocab, config.variant);
        let params = Params::init(&layout(&config, &sizes), seed);
        Ok(Model {
            config,
            sizes,
            params,
        })
    }

    pub fn from_params(config: &ModelConfig, vocab: &Vocab, params: Params<T>) -> Result<Self> {
        let config = config.resolved(vocab);
        config.validate()?;
        let sizes = TableSizes::new(vocab, config.variant);
        let specs = layout(&config, &sizes);
        let stored = params
            .names()
            .iter()
            .cloned()
            .zip(params.tensors().iter().cloned())
            .collect();
        let params = Params::from_named(&specs, stored)?;
        Ok(Model {
            config,
            sizes,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn sizes(&self) -> &TableSizes {
        &self.sizes
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    pub fn into_params(self) -> Params<T> {
        self.params
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            sizes: self.sizes.clone(),
            params: self.params.cast(),
        }
    }

    /// Registers every parameter as a tape leaf, in parameter order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params
            .tensors()
            .iter()
            .map(|t| tape.param(t.clone()))
            .collect()
    }

    fn check_batch(&self, batch: &BatchedGraph) -> Result<()> {
        if batch.variant != self.config.variant {
            return Err(Error::VariantMismatch {
                expected: self.config.variant.to_string(),
                found: batch.variant.to_string(),
            });
        }
        for (&k, &v) in batch.node_kind.iter().zip(&batch.node_value) {
            let Some(&(_, rows)) = self.sizes.node_tables.get(k as usize) else {
                return Err(Error::IdOutOfRange {
                    table: "node kinds",
                    id: k as usize,
                    rows: self.sizes.node_tables.len(),
                });
            };
            if v as usize >= rows {
                return Err(Error::IdOutOfRange {
                    table: "node values",
                    id: v as usize,
                    rows,
                });
            }
        }
        if let Some(&t) = batch
            .edge_type
            .iter()
            .find(|&&t| t as usize >= self.sizes.edge_types)
        {
            return Err(Error::IdOutOfRange {
                table: "edge types",
                id: t as usize,
                rows: self.sizes.edge_types,
            });
        }
        Ok(())
    }

    /// Records the forward pass on `tape` using leaves from [`Model::bind`].
    /// Dropout is active exactly when `dropout_rng` is given.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        batch: &BatchedGraph,
        mut dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<ForwardTrace> {
        self.check_batch(batch)?;
        let p = Bound {
            params: &self.params,
            vars: vars.to_vec(),
        };
        let cfg = &self.config;
        let train = dropout_rng.is_some();
        let n = batch.num_nodes();
        let e = batch.num_edges();
        let g = batch.num_graphs();
        let heads = cfg.heads;
        let scale = T::from_f64(1.0 / (cfg.hidden_dim as f64).sqrt());
        let rate = cfg.dropout;
        let mut drop = |tape: &mut Tape<T>, x: Var| -> Result<Var> {
            match dropout_rng.as_mut() {
                Some(r) => tape.dropout(x, rate, train, &mut **r),
                None => Ok(x),
            }
        };

        let part = Participants::new(batch);
        let node_graph: Index = batch.node_graph.iter().map(|&x| x as usize).collect();
        let edge_type: Index = batch.edge_type.iter().map(|&t| t as usize).collect();
        let part_type: Index = part.edge.iter().map(|&x| edge_type[x]).collect();
        let tied = roles(cfg.variant).len() == 1;
        let node_msg_index = if tied {
            part.node.clone()
        } else {
            part.role_index(&part.node, n)
        };
        let edge_msg_index = if tied {
            part.edge.clone()
        } else {
            part.role_index(&part.edge, e)
        };

        let h0 = self.embed_nodes(tape, &p, batch)?;
        let edge_embed = p.var("embed.edge");
        let mut h = h0;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let name = |s: &str| format!("layers.{l}.{s}");
            // Messages only enter attention through the key and value maps, so
            // each role projection is folded into them: `(xW + b)K = x(WK) + bK`.
            let keys_values =
                |tape: &mut Tape<T>, x: Var, stage: &str, attn: &str| -> Result<(Var, Var)> {
                    let mut keys = Vec::new();
                    let mut values = Vec::new();
                    for role in roles(cfg.variant) {
                        let w = p.var(&name(&format!("{stage}.{role}.weight")));
                        let b = p.var(&name(&format!("{stage}.{role}.bias")));
                        for (out, map) in [(&mut keys, "key"), (&mut values, "value")] {
                            let m = p.var(&name(&format!("{attn}.{map}")));
                            let wm = tape.matmul(w, m)?;
                            let bm = tape.matmul(b, m)?;
                            out.push(tape.affine(x, wm, bm)?);
                        }
                    }
                    let stack = |tape: &mut Tape<T>, parts: Vec<Var>| {
                        if parts.len() == 1 {
                            Ok(parts[0])
                        } else {
                            tape.concat_rows(&parts)
                        }
                    };
                    Ok((stack(tape, keys)?, stack(tape, values)?))
                };

            // nodes -> hyperedges
            let (key_table, value_table) = keys_values(tape, h, "node_to_edge", "attn1")?;
            let query_table = tape.matmul(edge_embed, p.var(&name("attn1.query")))?;
            let query = tape.gather_rows(query_table, part_type.clone())?;
            let key = tape.gather_rows(key_table, node_msg_index.clone())?;
            let score = tape.head_dot(query, key, heads, scale)?;
            let edge_attn = tape.segment_softmax(score, part.edge.clone(), e)?;
            let weights = drop(tape, edge_attn)?;
            let node_msg = tape.gather_rows(value_table, node_msg_index.clone())?;
            let o = tape.segment_weighted_sum(node_msg, weights, part.edge.clone(), e)?;
            let z_table = tape.affine(
                edge_embed,
                p.var(&name("edge_type.weight")),
                p.var(&name("edge_type.bias")),
            )?;
            let z = tape.gather_rows(z_table, edge_type.clone())?;
            let q = tape.add(o, z)?;

            // hyperedges -> nodes
            let (key_table, value_table) = keys_values(tape, q, "edge_to_node", "attn2")?;
            let node_query = tape.matmul(h, p.var(&name("attn2.query")))?;
            let query = tape.gather_rows(node_query, part.node.clone())?;
            let key = tape.gather_rows(key_table, edge_msg_index.clone())?;
            let score = tape.head_dot(query, key, heads, scale)?;
            let node_attn = tape.segment_softmax(score, part.node.clone(), n)?;
            let weights = drop(tape, node_attn)?;
            let edge_msg = tape.gather_rows(value_table, edge_msg_index.clone())?;
            let v = tape.segment_weighted_sum(edge_msg, weights, part.node.clone(), n)?;

            let agg = tape.matmul(v, p.var(&name("update.agg")))?;
            let own = tape.matmul(h, p.var(&name("update.self")))?;
            let u = tape.add(agg, own)?;
            let u = tape.add_bias(u, p.var(&name("update.bias")))?;
            let normed = tape.graph_norm(
                u,
                node_graph.clone(),
                g,
                p.var(&name("norm.alpha")),
                p.var(&name("norm.gamma")),
                p.var(&name("norm.beta")),
                GRAPH_NORM_EPS,
            )?;
            let act = tape.elu(normed)?;
            let next = drop(tape, act)?;
            layers.push(LayerVars {
                node_msg,
                edge_attn,
                o,
                z,
                q,
                edge_msg,
                node_attn,
                v,
                h: next,
            });
            h = next;
        }

        let zeros: Index = vec![0usize; n].into();
        let pool = tape.gather_rows(p.var("pool.query"), zeros)?;
        let score = tape.head_dot(h, pool, heads, T::one())?;
        let pool_attn = tape.segment_softmax(score, node_graph.clone(), g)?;
        let weights = drop(tape, pool_attn)?;
        let r = tape.segment_weighted_sum(h, weights, node_graph.clone(), g)?;
        let hidden = tape.affine(r, p.var("mlp.hidden.weight"), p.var("mlp.hidden.bias"))?;
        let hidden = tape.elu(hidden)?;
        let logits = tape.affine(hidden, p.var("mlp.out.weight"), p.var("mlp.out.bias"))?;

        Ok(ForwardTrace {
            participants: part,
            node_graph,
            h0,
            layers,
            pool_attn,
            r,
            logits,
        })
    }

    /// Per-kind embedding lookup followed by the per-kind projection, then
    /// reassembled in node order.
    fn embed_nodes(
        &self,
        tape: &mut Tape<T>,
        p: &Bound<'_, T>,
        batch: &BatchedGraph,
    ) -> Result<Var> {
        let kinds = self.sizes.node_tables.len();
        let mut ids: Vec<Vec<usize>> = vec![Vec::new(); kinds];
        let mut slot = Vec::with_capacity(batch.num_nodes());
        for (&k, &v) in batch.node_kind.iter().zip(&batch.node_value) {
            let k = k as usize;
            slot.push((k, ids[k].len()));
            ids[k].push(v as usize);
        }
        let mut parts = Vec::new();
        let mut base = vec![0usize; kinds];
        let mut offset = 0;
        for (k, (kind, _)) in self.sizes.node_tables.iter().enumerate() {
            if ids[k].is_empty() {
                continue;
            }
            base[k] = offset;
            offset += ids[k].len();
            let d = tape.gather_rows(p.var(&format!("embed.{kind}")), ids[k].as_slice().into())?;
            let w = p.var(&format!("project.{kind}.weight"));
            let b = p.var(&format!("project.{kind}.bias"));
            parts.push(tape.affine(d, w, b)?);
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let stacked = tape.concat_rows(&parts)?;
        let order: Index = slot.iter().map(|&(k, i)| base[k] + i).collect();
        tape.gather_rows(stacked, order)
    }

    /// Class distribution per graph, dropout off.
    pub fn predict(&self, batch: &BatchedGraph) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let trace = self.forward(&mut tape, &vars, batch, None)?;
        Ok(softmax_rows(tape.value(trace.logits)))
    }

    /// Mean cross-entropy and its gradient for a labelled batch.
    pub fn loss_and_grad(
        &self,
        batch: &BatchedGraph,
        dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<Step<T>> {
        self.loss_and_grad_on(Tape::new(), batch, dropout_rng)
    }

    /// As [`Model::loss_and_grad`] on a caller-configured tape.
    pub fn loss_and_grad_on(
        &self,
        mut tape: Tape<T>,
        batch: &BatchedGraph,
        dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<Step<T>> {
        let labels = batch.required_labels()?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.config.num_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: self.config.num_classes,
            });
        }
        let vars = self.bind(&mut tape);
        let trace = self.forward(&mut tape, &vars, batch, dropout_rng)?;
        let loss = tape.cross_entropy(trace.logits, &labels)?;
        let mut grads: Gradients<T> = tape.backward(loss)?;
        let grads = vars
            .iter()
            .zip(self.params.tensors())
            .map(|(v, t)| grads.or_zeros(*v, t.shape()))
            .collect();
        Ok(Step {
            loss: tape.value(loss).data()[0].as_f64(),
            grads,
            logits: tape.value(trace.logits).clone(),
        })
    }
}
