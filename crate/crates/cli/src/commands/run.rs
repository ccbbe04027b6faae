//! `train`, `eval`, `trials` and `ablate`.

use std::path::PathBuf;
use std::time::Instant;

use hdhgn::checkpoint::Checkpoint;
use hdhgn::graph::Variant;
use hdhgn::train::{
    ablation_table, evaluate, prepare_trial, run_ablation, run_trial, run_trials, Progress,
};
use serde::Serialize;

use super::{load_corpus, print_epoch};
use crate::artifacts::{write_file, RunDir, Timing};
use crate::config::{cache_env, Overrides, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

impl RunArgs {
    fn load(&self) -> CliResult<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides, cache_env())
    }
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Partition of the seed's split to evaluate.
    #[arg(long, value_enum, default_value = "test")]
    pub split: Part,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Val,
    Test,
}

#[derive(Debug, clap::Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated variants [default: all four].
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<Variant>,
}

fn checkpoint_name(variant: Variant, trial: usize) -> String {
    format!("checkpoints/{variant}-trial-{trial}.ckpt")
}

fn first_error(slot: &mut Option<CliError>, r: CliResult<()>) {
    if let (None, Err(e)) = (&slot, r) {
        *slot = Some(e);
    }
}

pub fn train(args: RunArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = args.load()?;
    let corpus = load_corpus(&cfg)?;
    let mut run = RunDir::create(cfg.paths.report_dir.join("train"), &cfg)?;
    let mut failed = None;
    let (result, checkpoint) = run_trial(&cfg.train, &cfg.model, &corpus, cfg.seed, &mut |m| {
        print_epoch("", m, cfg.train.epochs, cfg.train.report_every);
        first_error(&mut failed, run.log_epoch(None, None, m));
    })?;
    if let Some(e) = failed {
        return Err(e);
    }
    checkpoint.save(&cfg.paths.checkpoint)?;
    run.write(
        "report.json",
        serde_json::to_string_pretty(&result).expect("result serializes"),
    )?;
    let seconds = start.elapsed().as_secs_f64();
    run.time(Timing {
        variant: Some(cfg.model.variant),
        trial: None,
        seconds,
    });
    run.finish(seconds)?;
    println!(
        "test accuracy {:.4} (best epoch {}, majority baseline {:.4})",
        result.test_accuracy, result.best_epoch, result.majority_baseline
    );
    println!("checkpoint {}", cfg.paths.checkpoint.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: PathBuf,
    seed: u64,
    variant: Variant,
    split: Part,
    accuracy: f64,
    correct: usize,
    total: usize,
    loss: f64,
}

/// Evaluates the checkpoint on a partition of the split that `seed`
/// produces; the vocabulary rebuilt from that split must match the
/// checkpoint's.
pub fn eval(args: EvalArgs) -> CliResult<()> {
    let cfg = args.run.load()?;
    let ckpt = Checkpoint::load(&cfg.paths.checkpoint)?;
    let corpus = load_corpus(&cfg)?;
    let variant = ckpt.config().variant;
    let data = prepare_trial(&corpus, &cfg.train, variant, cfg.seed)?;
    ckpt.require_vocab(&data.vocab.digest())?;
    let graphs = match args.split {
        Part::Train => &data.train,
        Part::Val => &data.val,
        Part::Test => &data.test,
    };
    let run = RunDir::create(cfg.paths.report_dir.join("eval"), &cfg)?;
    let e = evaluate(&ckpt.model, graphs, cfg.train.batch_size)?;
    let report = EvalReport {
        checkpoint: cfg.paths.checkpoint.clone(),
        seed: cfg.seed,
        variant,
        split: args.split,
        accuracy: e.accuracy(),
        correct: e.correct,
        total: e.total,
        loss: e.loss,
    };
    run.write(
        "report.json",
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    println!("accuracy {:.4} ({}/{})", e.accuracy(), e.correct, e.total);
    Ok(())
}

fn progress<'a>(
    run: &'a mut RunDir,
    failed: &'a mut Option<CliError>,
    cfg: &'a RunConfig,
) -> impl FnMut(Progress<'_>) + 'a {
    move |p| match p {
        Progress::Epoch {
            variant,
            trial,
            metrics,
        } => {
            let prefix = format!("[{variant} trial {}/{}] ", trial + 1, cfg.train.trials);
            print_epoch(&prefix, metrics, cfg.train.epochs, cfg.train.report_every);
            first_error(failed, run.log_epoch(Some(variant), Some(trial), metrics));
        }
        Progress::Trial {
            variant,
            trial,
            result,
            seconds,
        } => {
            eprintln!(
                "[{variant} trial {}/{}] test accuracy {:.4} ({seconds:.0}s)",
                trial + 1,
                cfg.train.trials,
                result.test_accuracy
            );
            run.time(Timing {
                variant: Some(variant),
                trial: Some(trial),
                seconds,
            });
        }
    }
}

pub fn trials(args: RunArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = args.load()?;
    let corpus = load_corpus(&cfg)?;
    let mut run = RunDir::create(cfg.paths.report_dir.join("trials"), &cfg)?;
    let mut failed = None;
    let out = run_trials(
        &cfg.train,
        &cfg.model,
        &corpus,
        cfg.seed,
        &mut progress(&mut run, &mut failed, &cfg),
    )?;
    if let Some(e) = failed {
        return Err(e);
    }
    for (i, ckpt) in out.checkpoints.iter().enumerate() {
        write_file(
            &run.path(&checkpoint_name(cfg.model.variant, i)),
            ckpt.to_bytes(),
        )?;
    }
    run.write("report.json", out.report.to_json())?;
    run.finish(start.elapsed().as_secs_f64())?;
    print!("{}", ablation_table(&[&out.report]));
    Ok(())
}

pub fn ablate(args: AblateArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = args.run.load()?;
    let variants = if args.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        args.variants.clone()
    };
    let corpus = load_corpus(&cfg)?;
    let mut run = RunDir::create(cfg.paths.report_dir.join("ablate"), &cfg)?;
    let mut failed = None;
    let runs = run_ablation(
        &cfg.train,
        &cfg.model,
        &corpus,
        cfg.seed,
        &variants,
        &mut progress(&mut run, &mut failed, &cfg),
    )?;
    if let Some(e) = failed {
        return Err(e);
    }
    for r in &runs {
        let v = r.report.variant;
        for (i, ckpt) in r.checkpoints.iter().enumerate() {
            write_file(&run.path(&checkpoint_name(v, i)), ckpt.to_bytes())?;
        }
        run.write(&format!("{v}.json"), r.report.to_json())?;
    }
    let table = ablation_table(&runs.iter().map(|r| &r.report).collect::<Vec<_>>());
    run.write("table.txt", &table)?;
    run.finish(start.elapsed().as_secs_f64())?;
    print!("{table}");
    Ok(())
}
