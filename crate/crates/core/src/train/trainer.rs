use std::ops::ControlFlow;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::{batch_graphs, EncodedGraph, Vocab};
use crate::model::{Model, ModelConfig};
use crate::rng;
use crate::tensor::{argmax, softmax_rows, AdamConfig, AdamState, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the dropout-perturbed training forwards.
    pub train_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub seconds: f64,
}

pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: Model<f32>,
    /// 0 when the initial parameters were kept.
    pub best_epoch: usize,
    pub best_val_acc: Option<f64>,
    pub history: Vec<EpochMetrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub loss: f64,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Argmax accuracy (ties to the lowest class) and mean cross-entropy with
/// dropout off.
pub fn evaluate(
    model: &Model<f32>,
    graphs: &[EncodedGraph],
    batch_size: usize,
) -> Result<Evaluation> {
    let mut eval = Evaluation {
        correct: 0,
        total: 0,
        loss: 0.0,
        predictions: Vec::with_capacity(graphs.len()),
    };
    for chunk in graphs.chunks(batch_size.max(1)) {
        let batch = batch_graphs(chunk)?;
        let labels = batch.required_labels()?;
        let probs = model.predict(&batch)?;
        for (r, &label) in labels.iter().enumerate() {
            let row = probs.row(r);
            let pred = argmax(row);
            eval.predictions.push(pred);
            eval.correct += usize::from(pred == label);
            let p = row
                .get(label)
                .copied()
                .unwrap_or(0.0)
                .max(f32::MIN_POSITIVE);
            eval.loss -= (p as f64).ln();
        }
        eval.total += labels.len();
    }
    if eval.total > 0 {
        eval.loss /= eval.total as f64;
    }
    Ok(eval)
}

/// Minibatch Adam over `train`, keeping the parameters of the epoch with the
/// strictly highest validation accuracy (ties keep the earlier epoch).
/// Without validation data the last epoch is kept. `on_epoch` may stop
/// training early.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    vocab: &Vocab,
    train: &[EncodedGraph],
    val: &[EncodedGraph],
    seed: u64,
    mut on_epoch: impl FnMut(&EpochMetrics) -> ControlFlow<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = Model::<f32>::new(model_cfg, vocab, seed)?;
    let mut adam = AdamState::new(
        AdamConfig::with_learning_rate(cfg.learning_rate),
        model.params().tensors(),
    );
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_val_acc = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut rng::stream(seed, "shuffle", epoch as u64));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let graphs: Vec<&EncodedGraph> = idx.iter().map(|&i| &train[i]).collect();
            let batch = batch_graphs(graphs.iter().copied())?;
            let mut drop_rng = rng::stream(seed, "dropout", rng::pair(epoch as u64, b as u64));
            let mut tape = Tape::new();
            tape.set_check_finite(cfg.check_finite);
            let step = model
                .loss_and_grad_on(tape, &batch, Some(&mut drop_rng))
                .map_err(|e| match e {
                    Error::NonFiniteValue { op } => abort(
                        epoch,
                        b,
                        &batch.source_ids,
                        &format!("non-finite value in {op}"),
                    ),
                    other => other,
                })?;
            if !step.loss.is_finite() {
                return Err(abort(
                    epoch,
                    b,
                    &batch.source_ids,
                    &format!("loss is {}", step.loss),
                ));
            }
            let labels = batch.required_labels()?;
            let probs = softmax_rows(&step.logits);
            correct += labels
                .iter()
                .enumerate()
                .filter(|(r, &l)| argmax(probs.row(*r)) == l)
                .count();
            loss_sum += step.loss * labels.len() as f64;
            adam.step(model.params_mut().tensors_mut(), &step.grads)?;
        }
        let (val_loss, val_acc) = if val.is_empty() {
            (None, None)
        } else {
            let e = evaluate(&model, val, cfg.batch_size)?;
            (Some(e.loss), Some(e.accuracy()))
        };
        let improved = match (val_acc, best_val_acc) {
            (Some(v), Some(b)) => v > b,
            (Some(_), None) => true,
            (None, _) => true,
        };
        if improved {
            best = model.clone();
            best_epoch = epoch;
            best_val_acc = val_acc;
        }
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_loss,
            val_acc,
            seconds: start.elapsed().as_secs_f64(),
        };
        let flow = on_epoch(&metrics);
        history.push(metrics);
        if flow.is_break() {
            break;
        }
    }
    if cfg.epochs == 0 && !val.is_empty() {
        best_val_acc = Some(evaluate(&best, val, cfg.batch_size)?.accuracy());
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch,
        best_val_acc,
        history,
    })
}

fn abort(epoch: usize, batch: usize, ids: &[String], what: &str) -> Error {
    let shown: Vec<&str> = ids.iter().take(5).map(String::as_str).collect();
    Error::TrainingAborted(format!(
        "{what} at epoch {epoch}, batch {batch} (graphs {}{})",
        shown.join(", "),
        if ids.len() > shown.len() { ", ..." } else { "" }
    ))
}
