use std::fs;
use std::path::{Path, PathBuf};

use hdhgn::graph::Variant;
use hdhgn::model::ModelConfig;
use hdhgn::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CACHE_ENV: &str = "HDHGN_CACHE_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Canonical-AST JSON-lines file; used to (re)build the cache when it is
    /// missing or inconsistent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            cache_dir: "cache".into(),
            checkpoint: "model.ckpt".into(),
            report_dir: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: Paths,
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// Base random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model variant: full, no_hyperedge, no_hetero or no_direction.
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Canonical-AST corpus used when the cache must be built.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Dataset cache directory (also settable through HDHGN_CACHE_DIR).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| hdhgn::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Config file (or defaults), then the cache environment variable, then
    /// flags.
    pub fn load(
        path: Option<&Path>,
        overrides: &Overrides,
        cache_env: Option<PathBuf>,
    ) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => Self::read(p)?,
            None => Self::default(),
        };
        if let Some(dir) = cache_env {
            cfg.paths.cache_dir = dir;
        }
        let o = overrides.clone();
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(v) = o.variant {
            cfg.model.variant = v;
        }
        if let Some(v) = o.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = o.trials {
            cfg.train.trials = v;
        }
        if let Some(v) = o.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = o.learning_rate {
            cfg.train.learning_rate = v;
        }
        if o.corpus.is_some() {
            cfg.paths.corpus = o.corpus;
        }
        if let Some(v) = o.cache_dir {
            cfg.paths.cache_dir = v;
        }
        if let Some(v) = o.checkpoint {
            cfg.paths.checkpoint = v;
        }
        if let Some(v) = o.report_dir {
            cfg.paths.report_dir = v;
        }
        cfg.model.validate_unresolved()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn cache_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        for text in [
            r#"{"sed": 1}"#,
            r#"{"model": {"layer": 2}}"#,
            r#"{"train": {"epoch": 2}}"#,
            r#"{"paths": {"cache": "x"}}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = RunConfig::from_json(r#"{"seed": 7, "train": {"epochs": 3}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.model, ModelConfig::default());
        assert_eq!(cfg.paths, Paths::default());
    }

    #[test]
    fn precedence_is_file_then_environment_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"seed": 7, "paths": {"cache_dir": "from-file"}}"#).unwrap();
        let none = Overrides::default();
        let cfg = RunConfig::load(Some(&path), &none, None).unwrap();
        assert_eq!(cfg.paths.cache_dir, PathBuf::from("from-file"));
        let cfg = RunConfig::load(Some(&path), &none, Some("from-env".into())).unwrap();
        assert_eq!(cfg.paths.cache_dir, PathBuf::from("from-env"));
        let flags = Overrides {
            seed: Some(1),
            cache_dir: Some("from-flag".into()),
            variant: Some(Variant::NoHetero),
            ..Default::default()
        };
        let cfg = RunConfig::load(Some(&path), &flags, Some("from-env".into())).unwrap();
        assert_eq!(cfg.paths.cache_dir, PathBuf::from("from-flag"));
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.model.variant, Variant::NoHetero);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let flags = Overrides {
            batch_size: Some(0),
            ..Default::default()
        };
        let err = RunConfig::load(None, &flags, None).unwrap_err();
        assert_eq!(err.status(), crate::error::Status::Config);
    }

    #[test]
    fn resolved_copy_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
