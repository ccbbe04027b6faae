use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{ModelConfig, TableSizes};
use crate::error::{Error, Result};
use crate::graph::Variant;
use crate::rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Glorot,
    /// N(0, 1) scaled by `1 / sqrt(width)`.
    Embedding,
    /// Uniform in ±sqrt(6 / (width + 1)).
    Vector(usize),
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Node roles inside a hyperedge. The single-role variant ties both to one
/// projection named `shared`.
pub(crate) fn roles(variant: Variant) -> &'static [&'static str] {
    if variant == Variant::NoDirection {
        &["shared"]
    } else {
        &["tail", "head"]
    }
}

/// Ordered parameter inventory for a configuration.
pub fn layout(config: &ModelConfig, sizes: &TableSizes) -> Vec<ParamSpec> {
    let (c1, c2) = (config.embed_dim, config.hidden_dim);
    let mut specs = Vec::new();
    let mut add = |name: String, shape: &[usize], init: Init| {
        specs.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            init,
        })
    };
    for (kind, rows) in &sizes.node_tables {
        add(format!("embed.{kind}"), &[*rows, c1], Init::Embedding);
    }
    for (kind, _) in &sizes.node_tables {
        add(format!("project.{kind}.weight"), &[c1, c2], Init::Glorot);
        add(format!("project.{kind}.bias"), &[c2], Init::Zeros);
    }
    add(
        "embed.edge".into(),
        &[sizes.edge_types, c2],
        Init::Embedding,
    );
    for l in 0..config.layers {
        let p = format!("layers.{l}");
        for stage in ["node_to_edge", "edge_to_node"] {
            for role in roles(config.variant) {
                add(
                    format!("{p}.{stage}.{role}.weight"),
                    &[c2, c2],
                    Init::Glorot,
                );
                add(format!("{p}.{stage}.{role}.bias"), &[c2], Init::Zeros);
            }
            let attn = if stage == "node_to_edge" {
                "attn1"
            } else {
                "attn2"
            };
            for m in ["query", "key", "value"] {
                add(format!("{p}.{attn}.{m}"), &[c2, c2], Init::Glorot);
            }
            if stage == "node_to_edge" {
                add(format!("{p}.edge_type.weight"), &[c2, c2], Init::Glorot);
                add(format!("{p}.edge_type.bias"), &[c2], Init::Zeros);
            }
        }
        add(format!("{p}.update.agg"), &[c2, c2], Init::Glorot);
        add(format!("{p}.update.self"), &[c2, c2], Init::Glorot);
        add(format!("{p}.update.bias"), &[c2], Init::Zeros);
        add(format!("{p}.norm.alpha"), &[c2], Init::Ones);
        add(format!("{p}.norm.gamma"), &[c2], Init::Ones);
        add(format!("{p}.norm.beta"), &[c2], Init::Zeros);
    }
    add(
        "pool.query".into(),
        &[1, c2],
        Init::Vector(config.head_dim()),
    );
    add("mlp.hidden.weight".into(), &[c2, c2], Init::Glorot);
    add("mlp.hidden.bias".into(), &[c2], Init::Zeros);
    add(
        "mlp.out.weight".into(),
        &[c2, config.num_classes],
        Init::Glorot,
    );
    add("mlp.out.bias".into(), &[config.num_classes], Init::Zeros);
    specs
}

fn sample(spec: &ParamSpec, rng: &mut impl Rng) -> Vec<f64> {
    let len: usize = spec.shape.iter().product();
    let uniform = |rng: &mut dyn rand::RngCore, limit: f64| -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-limit..=limit)).collect()
    };
    match spec.init {
        Init::Glorot => {
            let limit = (6.0 / (spec.shape[0] + spec.shape[1]) as f64).sqrt();
            uniform(rng, limit)
        }
        Init::Vector(width) => uniform(rng, (6.0 / (width + 1) as f64).sqrt()),
        Init::Embedding => {
            let scale = 1.0 / (spec.shape[1] as f64).sqrt();
            (0..len)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
                .collect()
        }
        Init::Zeros => vec![0.0; len],
        Init::Ones => vec![1.0; len],
    }
}

/// Named parameter tensors in [`layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    lookup: HashMap<String, usize>,
}

impl<T: Scalar> Params<T> {
    /// Deterministic initialization. Values are drawn in 64-bit precision
    /// from one stream per tensor and then rounded, so 32- and 64-bit models
    /// built from one seed agree up to rounding.
    pub fn init(specs: &[ParamSpec], seed: u64) -> Self {
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let mut r = rng::stream(seed, "init", i as u64);
            let data = sample(spec, &mut r).into_iter().map(T::from_f64).collect();
            names.push(spec.name.clone());
            tensors.push(Tensor::from_vec(&spec.shape, data).expect("layout shape"));
        }
        Self::assemble(names, tensors)
    }

    /// Rebuild from stored tensors, checking them against the layout.
    pub fn from_named(specs: &[ParamSpec], mut stored: Vec<(String, Tensor<T>)>) -> Result<Self> {
        if stored.len() != specs.len() {
            return Err(Error::Format {
                what: "parameters",
                reason: format!("expected {} tensors, found {}", specs.len(), stored.len()),
            });
        }
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for (spec, (name, t)) in specs.iter().zip(stored.drain(..)) {
            if name != spec.name || t.shape() != spec.shape.as_slice() {
                return Err(Error::Format {
                    what: "parameters",
                    reason: format!(
                        "expected `{}` {:?}, found `{}` {:?}",
                        spec.name,
                        spec.shape,
                        name,
                        t.shape()
                    ),
                });
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self::assemble(names, tensors))
    }

    fn assemble(names: Vec<String>, tensors: Vec<Tensor<T>>) -> Self {
        let lookup = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Params {
            names,
            tensors,
            lookup,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.position(name).map(|i| &mut self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            lookup: self.lookup.clone(),
        }
    }
}
