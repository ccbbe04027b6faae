use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::Serialize;

use crate::error::Result;
use crate::graph::synthetic::random_ast;
use crate::graph::{apply_variant, batch_graphs, encode_corpus, BatchedGraph};
use crate::model::{Model, ModelConfig};
use crate::rng;
use crate::tensor::{Fault, Tape};

/// `|analytic − numeric| / max(|analytic|, |numeric|, floor)`. The floor keeps
/// coordinates whose true derivative is zero (for example a bias that the
/// following normalization removes) from turning rounding noise into a large
/// ratio.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub const THRESHOLD: f64 = 1e-4;

/// The model checked by default: every layer type at a size where a check of
/// ten seeds takes seconds.
pub fn small_model() -> ModelConfig {
    ModelConfig {
        layers: 2,
        embed_dim: 16,
        hidden_dim: 16,
        heads: 4,
        ..Default::default()
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    /// Check with a fixed dropout mask instead of dropout off.
    pub dropout: bool,
    pub fault: Option<Fault>,
    pub coordinates: usize,
    pub step: f64,
    pub max_nodes: usize,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            dropout: true,
            fault: None,
            coordinates: 200,
            step: 1e-4,
            max_nodes: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub nodes: usize,
    pub classes: usize,
    pub tensors: usize,
    pub coordinates: usize,
    pub max_rel_err: f64,
    /// Worst error of the plain central difference at `step`, before
    /// extrapolation; informational.
    pub central_max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < THRESHOLD
    }
}

fn loss(
    model: &Model<f64>,
    batch: &BatchedGraph,
    labels: &[usize],
    mask: Option<u64>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let mut r = mask.map(|s| rng::stream(s, "gradcheck-dropout", 0));
    let trace = model.forward(
        &mut tape,
        &vars,
        batch,
        r.as_mut().map(|r| r as &mut dyn RngCore),
    )?;
    let l = tape.cross_entropy(trace.logits, labels)?;
    Ok(tape.value(l).data()[0])
}

/// Finite differences of the loss on one random graph against the tape's
/// gradient. Each numeric derivative is a Richardson extrapolation of central
/// differences at `step` and `step / 2`, which cancels their leading
/// second-order truncation error. Larger steps are unreliable here: on tiny
/// graphs a near-constant channel makes graph normalization switch sign over a
/// width of about `sqrt(eps)`. Coordinates are a stratified sample: every
/// tensor contributes at least two, and embedding tables are sampled only from
/// rows the graph actually looks up.
pub fn gradient_check(
    model_cfg: &ModelConfig,
    seed: u64,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    let mut r = rng::stream(seed, "gradcheck", 0);
    let classes = r.gen_range(2..=4usize);
    let nodes = r.gen_range(2..=opts.max_nodes.max(2));
    let label = r.gen_range(0..classes) as u32;
    let ast = random_ast(&mut r, nodes, "gradcheck", Some(label));
    let names = (0..classes).map(|c| format!("class{c}")).collect();
    let (vocab, graphs) = encode_corpus(std::slice::from_ref(&ast), 1, names)?;
    let g = apply_variant(&graphs[0], model_cfg.variant, &vocab)?;
    let batch = batch_graphs([&g])?;
    let labels = batch.required_labels()?;
    let cfg = ModelConfig {
        num_classes: classes,
        ..model_cfg.clone()
    };
    let mut model = Model::<f64>::new(&cfg, &vocab, seed)?;
    let mask = opts.dropout.then_some(seed);

    let mut tape = Tape::new();
    tape.inject_fault(opts.fault);
    let mut drop = mask.map(|s| rng::stream(s, "gradcheck-dropout", 0));
    let step =
        model.loss_and_grad_on(tape, &batch, drop.as_mut().map(|r| r as &mut dyn RngCore))?;

    let sizes = model.sizes().clone();
    let used_rows = |name: &str| -> Option<BTreeSet<usize>> {
        if name == "embed.edge" {
            return Some(batch.edge_type.iter().map(|&t| t as usize).collect());
        }
        let kind = name.strip_prefix("embed.")?;
        let code = sizes.node_tables.iter().position(|(k, _)| *k == kind)?;
        Some(
            batch
                .node_kind
                .iter()
                .zip(&batch.node_value)
                .filter(|(k, _)| **k as usize == code)
                .map(|(_, v)| *v as usize)
                .collect(),
        )
    };
    let params = model.params();
    let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(params.len());
    for (name, t) in params.names().iter().zip(params.tensors()) {
        let cols = t.shape().last().copied().unwrap_or(1);
        let c: Vec<usize> = match used_rows(name) {
            Some(rows) => rows
                .into_iter()
                .flat_map(|row| row * cols..(row + 1) * cols)
                .collect(),
            None => (0..t.len()).collect(),
        };
        candidates.push(c);
    }
    let tensors = candidates.iter().filter(|c| !c.is_empty()).count();
    let quota = opts.coordinates.div_ceil(tensors.max(1)).max(2);
    let mut picks: Vec<(usize, usize)> = Vec::new();
    for (ti, c) in candidates.iter_mut().enumerate() {
        c.shuffle(&mut r);
        picks.extend(c.iter().take(quota).map(|&i| (ti, i)));
    }

    let rel_err = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_FLOOR);
    let central = |model: &mut Model<f64>, ti: usize, i: usize, h: f64| -> Result<f64> {
        let original = model.params().tensors()[ti].data()[i];
        model.params_mut().tensors_mut()[ti].data_mut()[i] = original + h;
        let plus = loss(model, &batch, &labels, mask);
        model.params_mut().tensors_mut()[ti].data_mut()[i] = original - h;
        let minus = loss(model, &batch, &labels, mask);
        model.params_mut().tensors_mut()[ti].data_mut()[i] = original;
        Ok((plus? - minus?) / (2.0 * h))
    };
    let h = opts.step;
    let mut worst = (0.0f64, 0usize, 0usize, 0.0, 0.0);
    let mut central_worst = 0.0f64;
    for &(ti, i) in &picks {
        let coarse = central(&mut model, ti, i, h)?;
        let fine = central(&mut model, ti, i, h / 2.0)?;
        let numeric = (4.0 * fine - coarse) / 3.0;
        let analytic = step.grads[ti].data()[i];
        central_worst = central_worst.max(rel_err(analytic, coarse));
        let rel = rel_err(analytic, numeric);
        if rel > worst.0 || rel.is_nan() {
            worst = (rel, ti, i, analytic, numeric);
        }
    }
    Ok(GradcheckReport {
        seed,
        nodes,
        classes,
        tensors,
        coordinates: picks.len(),
        max_rel_err: worst.0,
        central_max_rel_err: central_worst,
        worst_param: model.params().names()[worst.1].clone(),
        worst_index: worst.2,
        analytic: worst.3,
        numeric: worst.4,
    })
}
