use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::split::split_dataset;
use super::trainer::{evaluate, train, EpochMetrics};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::graph::{
    apply_variant, build_vocab, encode_graph, Corpus, EncodedGraph, HdhGraph, Interner, NodeKind,
    Variant, Vocab,
};
use crate::model::ModelConfig;

/// One trial's encoded splits with a training-only vocabulary.
pub struct TrialData {
    pub vocab: Vocab,
    pub train: Vec<EncodedGraph>,
    pub val: Vec<EncodedGraph>,
    pub test: Vec<EncodedGraph>,
}

pub fn prepare_trial(
    corpus: &Corpus,
    cfg: &TrainConfig,
    variant: Variant,
    seed: u64,
) -> Result<TrialData> {
    let labels = corpus
        .labels()
        .ok_or_else(|| Error::Config("training needs every record to carry a label".into()))?;
    let split = split_dataset(
        corpus.len(),
        &cfg.split,
        seed,
        cfg.stratified.then_some(labels.as_slice()),
    )?;
    let pick =
        |idx: &[usize]| -> Vec<&HdhGraph> { idx.iter().map(|&i| &corpus.graphs[i]).collect() };
    let train_graphs = pick(&split.train);
    let mut vocab = build_vocab(
        train_graphs.iter().copied(),
        cfg.min_identifier_freq,
        corpus.label_names.clone(),
    )?;
    cover_grammar(
        &mut vocab,
        split
            .val
            .iter()
            .chain(&split.test)
            .map(|&i| &corpus.graphs[i]),
    )?;
    let encode = |gs: Vec<&HdhGraph>| -> Result<Vec<EncodedGraph>> {
        gs.into_iter()
            .map(|g| apply_variant(&encode_graph(g, &vocab)?, variant, &vocab))
            .collect()
    };
    Ok(TrialData {
        train: encode(train_graphs)?,
        val: encode(pick(&split.val))?,
        test: encode(pick(&split.test))?,
        vocab,
    })
}

/// Appends AST node types and edge types that occur only outside the
/// training split, in lexicographic order after the training-ranked entries.
/// Their embeddings stay at initialization. Identifiers are not extended.
fn cover_grammar<'a>(vocab: &mut Vocab, others: impl Iterator<Item = &'a HdhGraph>) -> Result<()> {
    let mut ast = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for g in others {
        for n in &g.nodes {
            if n.kind == NodeKind::Ast && vocab.ast_values.id(&n.value).is_none() {
                ast.insert(n.value.clone());
            }
        }
        for e in &g.hyperedges {
            if vocab.edge_types.id(&e.edge_type).is_none() {
                edges.insert(e.edge_type.clone());
            }
        }
    }
    if !ast.is_empty() {
        let mut items = vocab.ast_values.items().to_vec();
        items.extend(ast);
        vocab.ast_values = Interner::from_items(items)?;
    }
    if !edges.is_empty() {
        let mut items = vocab.edge_types.items().to_vec();
        items.extend(edges);
        vocab.edge_types = Interner::from_items(items)?;
    }
    Ok(())
}

/// Accuracy on `test` of always predicting the most frequent training label
/// (ties to the lowest label id).
pub fn majority_baseline(train: &[EncodedGraph], test: &[EncodedGraph]) -> f64 {
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for g in train {
        if let Some(l) = g.label {
            *counts.entry(l).or_default() += 1;
        }
    }
    let Some(major) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(l, _)| *l)
    else {
        return 0.0;
    };
    if test.is_empty() {
        return 0.0;
    }
    test.iter().filter(|g| g.label == Some(major)).count() as f64 / test.len() as f64
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

impl From<&EpochMetrics> for CurvePoint {
    fn from(m: &EpochMetrics) -> Self {
        CurvePoint {
            epoch: m.epoch,
            train_loss: m.train_loss,
            train_acc: m.train_acc,
            val_loss: m.val_loss,
            val_acc: m.val_acc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub test_accuracy: f64,
    pub majority_baseline: f64,
    pub best_epoch: usize,
    pub best_val_acc: Option<f64>,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub vocab_digest: String,
    pub curve: Vec<CurvePoint>,
}

/// Deterministic summary of a set of trials; wall-clock times are kept
/// separately in [`TrialRun::seconds`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub variant: Variant,
    pub base_seed: u64,
    pub test_accuracies: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub single_trial: bool,
    pub majority_baseline_mean: f64,
    pub trials: Vec<TrialResult>,
}

impl TrialReport {
    pub fn from_trials(variant: Variant, base_seed: u64, trials: Vec<TrialResult>) -> Self {
        let accs: Vec<f64> = trials.iter().map(|t| t.test_accuracy).collect();
        let (mean, sd) = mean_sd(&accs);
        let (majority_baseline_mean, _) = mean_sd(
            &trials
                .iter()
                .map(|t| t.majority_baseline)
                .collect::<Vec<_>>(),
        );
        TrialReport {
            variant,
            base_seed,
            single_trial: accs.len() == 1,
            test_accuracies: accs,
            mean,
            sd,
            majority_baseline_mean,
            trials,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub struct TrialRun {
    pub report: TrialReport,
    pub checkpoints: Vec<Checkpoint>,
    pub seconds: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub enum Progress<'a> {
    Epoch {
        variant: Variant,
        trial: usize,
        metrics: &'a EpochMetrics,
    },
    Trial {
        variant: Variant,
        trial: usize,
        result: &'a TrialResult,
        seconds: f64,
    },
}

/// Splits with `seed`, trains, and evaluates the best-validation parameters
/// on the test split.
pub fn run_trial(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    corpus: &Corpus,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<(TrialResult, Checkpoint)> {
    let data = prepare_trial(corpus, cfg, model_cfg.variant, seed)?;
    let outcome = train(
        cfg,
        model_cfg,
        &data.vocab,
        &data.train,
        &data.val,
        seed,
        |m| {
            on_epoch(m);
            ControlFlow::Continue(())
        },
    )?;
    let test = evaluate(&outcome.model, &data.test, cfg.batch_size)?;
    let result = TrialResult {
        seed,
        test_accuracy: test.accuracy(),
        majority_baseline: majority_baseline(&data.train, &data.test),
        best_epoch: outcome.best_epoch,
        best_val_acc: outcome.best_val_acc,
        train_size: data.train.len(),
        val_size: data.val.len(),
        test_size: data.test.len(),
        vocab_digest: data.vocab.digest(),
        curve: outcome.history.iter().map(CurvePoint::from).collect(),
    };
    Ok((result, Checkpoint::new(outcome.model, data.vocab)))
}

/// Trial `i` re-splits and re-initializes with seed `base_seed + i`.
pub fn run_trials(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    corpus: &Corpus,
    base_seed: u64,
    progress: &mut dyn FnMut(Progress<'_>),
) -> Result<TrialRun> {
    cfg.validate()?;
    let variant = model_cfg.variant;
    let mut results = Vec::with_capacity(cfg.trials);
    let mut checkpoints = Vec::with_capacity(cfg.trials);
    let mut seconds = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let start = Instant::now();
        let seed = base_seed.wrapping_add(trial as u64);
        let (result, checkpoint) = run_trial(cfg, model_cfg, corpus, seed, &mut |m| {
            progress(Progress::Epoch {
                variant,
                trial,
                metrics: m,
            })
        })?;
        let elapsed = start.elapsed().as_secs_f64();
        progress(Progress::Trial {
            variant,
            trial,
            result: &result,
            seconds: elapsed,
        });
        results.push(result);
        checkpoints.push(checkpoint);
        seconds.push(elapsed);
    }
    Ok(TrialRun {
        report: TrialReport::from_trials(variant, base_seed, results),
        checkpoints,
        seconds,
    })
}

/// One [`run_trials`] per variant, all with the same seeds and therefore the
/// same splits.
pub fn run_ablation(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    corpus: &Corpus,
    base_seed: u64,
    variants: &[Variant],
    progress: &mut dyn FnMut(Progress<'_>),
) -> Result<Vec<TrialRun>> {
    variants
        .iter()
        .map(|&variant| {
            let mc = ModelConfig {
                variant,
                ..model_cfg.clone()
            };
            run_trials(cfg, &mc, corpus, base_seed, progress)
        })
        .collect()
}

/// Aligned comparison table, one row per report.
pub fn ablation_table(reports: &[&TrialReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>7} {:>10} {:>9} {:>10}  per-trial",
        "variant", "trials", "mean acc", "sd", "majority"
    );
    for r in reports {
        let per: Vec<String> = r
            .test_accuracies
            .iter()
            .map(|a| format!("{:.4}", a))
            .collect();
        let _ = writeln!(
            out,
            "{:<14} {:>7} {:>10.4} {:>9.4} {:>10.4}  {}",
            r.variant.as_str(),
            r.test_accuracies.len(),
            r.mean,
            r.sd,
            r.majority_baseline_mean,
            per.join(" ")
        );
    }
    out
}
