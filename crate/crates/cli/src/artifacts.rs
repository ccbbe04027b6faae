//! Files a command leaves in its report directory:
//! - `config.json`: the resolved configuration (frozen copy),
//! - `metrics.jsonl`: one record per epoch,
//! - `timings.json`: wall-clock seconds, kept apart so every other report is
//!   reproducible byte for byte,
//! - command-specific reports.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hdhgn::graph::Variant;
use hdhgn::train::EpochMetrics;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliResult;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> hdhgn::Error + '_ {
    move |e| hdhgn::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(path, contents).map_err(io(path))?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsRecord<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<Variant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trial: Option<usize>,
    #[serde(flatten)]
    metrics: &'a EpochMetrics,
}

#[derive(Serialize)]
pub struct Timing {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    pub seconds: f64,
}

pub struct RunDir {
    dir: PathBuf,
    metrics: BufWriter<File>,
    timings: Vec<Timing>,
}

impl RunDir {
    /// Creates `dir`, writes the frozen config and starts a fresh metrics log.
    pub fn create(dir: PathBuf, config: &RunConfig) -> CliResult<Self> {
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        write_file(&dir.join("config.json"), config.to_json())?;
        let path = dir.join("metrics.jsonl");
        let metrics = BufWriter::new(File::create(&path).map_err(io(&path))?);
        Ok(RunDir {
            dir,
            metrics,
            timings: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn log_epoch(
        &mut self,
        variant: Option<Variant>,
        trial: Option<usize>,
        metrics: &EpochMetrics,
    ) -> CliResult<()> {
        let line = serde_json::to_string(&MetricsRecord {
            variant,
            trial,
            metrics,
        })
        .expect("metrics serialize");
        let path = self.path("metrics.jsonl");
        writeln!(self.metrics, "{line}").map_err(io(&path))?;
        self.metrics.flush().map_err(io(&path))?;
        Ok(())
    }

    pub fn time(&mut self, timing: Timing) {
        self.timings.push(timing);
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.path(name);
        write_file(&path, contents)?;
        Ok(path)
    }

    pub fn finish(self, total_seconds: f64) -> CliResult<()> {
        #[derive(Serialize)]
        struct Timings<'a> {
            total_seconds: f64,
            runs: &'a [Timing],
        }
        let text = serde_json::to_string_pretty(&Timings {
            total_seconds,
            runs: &self.timings,
        })
        .expect("timings serialize");
        self.write("timings.json", text)?;
        Ok(())
    }
}
