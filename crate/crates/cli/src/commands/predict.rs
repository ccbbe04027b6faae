use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use hdhgn::checkpoint::Checkpoint;
use hdhgn::graph::{
    apply_variant, batch_graphs, build_hdhg, encode_graph, read_jsonl, Manifest, Vocab,
};
use hdhgn::tensor::argmax;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Canonical-AST JSON-lines file; labels are optional.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Output JSON-lines file [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Label manifest mapping input label ids to names
    /// [default: FILE.manifest.json when present].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Vocabulary the checkpoint is expected to carry; a different digest is an
    /// error.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Also list the K most probable labels.
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

#[derive(Serialize)]
struct Ranked<'a> {
    label: &'a str,
    prob: f32,
}

#[derive(Serialize)]
struct Prediction<'a> {
    source_id: &'a str,
    pred_label: &'a str,
    probs: &'a [f32],
    #[serde(skip_serializing_if = "Option::is_none")]
    top_k: Option<Vec<Ranked<'a>>>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| {
        hdhgn::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    }
}

/// Input label ids translated to the checkpoint's label ids through the
/// manifest's names; without a manifest the ids are taken as they are.
fn label_map(args: &PredictArgs, vocab: &Vocab) -> CliResult<Option<Vec<u32>>> {
    let path = match &args.manifest {
        Some(p) => p.clone(),
        None => {
            let sidecar = Manifest::sidecar_path(&args.input);
            if !sidecar.exists() {
                return Ok(None);
            }
            sidecar
        }
    };
    let manifest = Manifest::read(&path)?;
    manifest
        .labels
        .iter()
        .map(|name| {
            vocab.label_names.id(name).ok_or_else(|| {
                CliError::Config(format!("label `{name}` is unknown to the checkpoint"))
            })
        })
        .collect::<CliResult<Vec<_>>>()
        .map(Some)
}

pub fn run(args: PredictArgs) -> CliResult<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    if let Some(path) = &args.vocab {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        ckpt.require_vocab(&Vocab::from_json(&text)?.digest())?;
    }
    let vocab = &ckpt.vocab;
    let variant = ckpt.config().variant;
    let map = label_map(&args, vocab)?;
    let mut asts = read_jsonl(&args.input)?;
    if let Some(map) = &map {
        for a in &mut asts {
            if let Some(l) = a.label {
                a.label = Some(*map.get(l as usize).ok_or_else(|| {
                    CliError::Config(format!(
                        "`{}`: label {l} is not in the manifest",
                        a.source_id
                    ))
                })?);
            }
        }
    }
    let graphs = asts
        .iter()
        .map(|a| apply_variant(&encode_graph(&build_hdhg(a)?, vocab)?, variant, vocab))
        .collect::<hdhgn::Result<Vec<_>>>()?;

    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let out_path = args.out.clone().unwrap_or_else(|| "<stdout>".into());
    let names = vocab.label_names.items();
    let (mut correct, mut labelled) = (0usize, 0usize);
    for chunk in graphs.chunks(args.batch_size.max(1)) {
        let probs = ckpt.model.predict(&batch_graphs(chunk)?)?;
        for (r, g) in chunk.iter().enumerate() {
            let row = probs.row(r);
            let pred = argmax(row);
            if let Some(l) = g.label {
                labelled += 1;
                correct += usize::from(l as usize == pred);
            }
            let top_k = args.top_k.map(|k| {
                let mut order: Vec<usize> = (0..row.len()).collect();
                order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                order
                    .into_iter()
                    .take(k)
                    .map(|i| Ranked {
                        label: &names[i],
                        prob: row[i],
                    })
                    .collect()
            });
            let line = serde_json::to_string(&Prediction {
                source_id: &g.source_id,
                pred_label: &names[pred],
                probs: row,
                top_k,
            })
            .expect("prediction serializes");
            writeln!(out, "{line}").map_err(io_err(&out_path))?;
        }
    }
    out.flush().map_err(io_err(&out_path))?;
    if labelled > 0 {
        eprintln!(
            "accuracy {:.4} ({correct}/{labelled} labelled inputs)",
            correct as f64 / labelled as f64
        );
    }
    Ok(())
}
