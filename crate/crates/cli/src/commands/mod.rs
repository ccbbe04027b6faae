pub mod build;
pub mod gradcheck;
pub mod predict;
pub mod run;

use hdhgn::graph::Corpus;
use hdhgn::train::EpochMetrics;

use crate::config::RunConfig;
use crate::error::CliResult;

/// The cache, rebuilt from `paths.corpus` when it is missing or stale.
pub fn load_corpus(cfg: &RunConfig) -> CliResult<Corpus> {
    if let Some(src) = &cfg.paths.corpus {
        if !src.exists() {
            return Err(hdhgn::Error::Io {
                path: src.clone(),
                source: std::io::ErrorKind::NotFound.into(),
            }
            .into());
        }
    }
    Ok(Corpus::load_or_build(
        &cfg.paths.cache_dir,
        cfg.paths.corpus.as_deref(),
        cfg.train.min_identifier_freq,
    )?)
}

pub fn print_epoch(prefix: &str, m: &EpochMetrics, total: usize, every: usize) {
    if every == 0 || (!m.epoch.is_multiple_of(every) && m.epoch != total) {
        return;
    }
    let val = m
        .val_acc
        .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    eprintln!(
        "{prefix}epoch {}/{total} train_loss {:.4} train_acc {:.4} val_acc {val} ({:.1}s)",
        m.epoch, m.train_loss, m.train_acc, m.seconds
    );
}
