//! A loaded dataset of hypergraphs, and the on-disk cache directory.
//!
//! The cache directory holds:
//! - `vocab.json`: a lossless vocabulary (every identifier kept) plus label names,
//! - `graphs.bin`: all graphs encoded against it (see [`super::cache`]),
//! - `build.json`: a summary of the build.
//!
//! Training vocabularies are rebuilt per split from the decoded graphs, so the
//! cache never leaks validation or test identifiers into training.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ast::{read_jsonl, CanonicalAst, Manifest};
use super::cache::{read_cache, write_cache};
use super::encode::{decode_graph, encode_graph};
use super::hdhg::{build_hdhg, HdhGraph};
use super::vocab::{build_vocab, Vocab};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub graphs: Vec<HdhGraph>,
    pub label_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildSummary {
    pub source: String,
    pub min_identifier_freq: usize,
    pub records: usize,
    pub nodes: usize,
    pub edges: usize,
    pub ast_types: usize,
    pub edge_types: usize,
    pub identifiers: usize,
    pub labels: usize,
}

pub const VOCAB_FILE: &str = "vocab.json";
pub const GRAPHS_FILE: &str = "graphs.bin";
pub const BUILD_FILE: &str = "build.json";

impl Corpus {
    /// Label names default to the decimal ids `0..=max label`.
    pub fn from_asts(asts: &[CanonicalAst], label_names: Option<Vec<String>>) -> Result<Self> {
        let graphs = asts.iter().map(build_hdhg).collect::<Result<Vec<_>>>()?;
        let max = graphs.iter().filter_map(|g| g.label).max();
        let label_names = match label_names {
            Some(names) => names,
            None => (0..max.map_or(0, |m| m + 1))
                .map(|i| i.to_string())
                .collect(),
        };
        if let Some(m) = max {
            if m as usize >= label_names.len() {
                return Err(Error::LabelOutOfRange {
                    label: m as usize,
                    classes: label_names.len(),
                });
            }
        }
        Ok(Corpus {
            graphs,
            label_names,
        })
    }

    /// Reads a JSON-lines file, taking label names from its manifest sidecar
    /// when one exists.
    pub fn read_jsonl(path: &Path) -> Result<Self> {
        Self::read_jsonl_with_manifest(path, None)
    }

    pub fn read_jsonl_with_manifest(path: &Path, manifest: Option<&Path>) -> Result<Self> {
        let asts = read_jsonl(path)?;
        let sidecar = manifest
            .map(Path::to_path_buf)
            .unwrap_or_else(|| Manifest::sidecar_path(path));
        let names = if sidecar.exists() {
            Some(Manifest::read(&sidecar)?.labels)
        } else if manifest.is_some() {
            return Err(Error::io(&sidecar, std::io::ErrorKind::NotFound.into()));
        } else {
            None
        };
        Self::from_asts(&asts, names)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Labels of every record, or `None` when some record is unlabelled.
    pub fn labels(&self) -> Option<Vec<u32>> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    pub fn summary(&self, source: &str, min_identifier_freq: usize) -> Result<BuildSummary> {
        let vocab = build_vocab(&self.graphs, min_identifier_freq, self.label_names.clone())?;
        Ok(BuildSummary {
            source: source.to_string(),
            min_identifier_freq,
            records: self.graphs.len(),
            nodes: self.graphs.iter().map(|g| g.nodes.len()).sum(),
            edges: self.graphs.iter().map(|g| g.hyperedges.len()).sum(),
            ast_types: vocab.ast_values.len(),
            edge_types: vocab.edge_types.len(),
            identifiers: vocab.identifier_values.len(),
            labels: vocab.num_classes(),
        })
    }

    /// Writes the cache directory and returns the build summary.
    pub fn write_cache_dir(
        &self,
        dir: &Path,
        source: &str,
        min_identifier_freq: usize,
    ) -> Result<BuildSummary> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let vocab = build_vocab(&self.graphs, 1, self.label_names.clone())?;
        let encoded = self
            .graphs
            .iter()
            .map(|g| encode_graph(g, &vocab))
            .collect::<Result<Vec<_>>>()?;
        let vocab_path = dir.join(VOCAB_FILE);
        fs::write(&vocab_path, vocab.to_json()).map_err(|e| Error::io(&vocab_path, e))?;
        write_cache(&dir.join(GRAPHS_FILE), &vocab.digest_bytes(), &encoded)?;
        let summary = self.summary(source, min_identifier_freq)?;
        let build_path = dir.join(BUILD_FILE);
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(&build_path, text).map_err(|e| Error::io(&build_path, e))?;
        Ok(summary)
    }

    /// Loads a cache directory. A vocabulary whose digest differs from the
    /// one stored in `graphs.bin` is a `VocabMismatch`.
    pub fn read_cache_dir(dir: &Path) -> Result<Self> {
        let vocab_path = dir.join(VOCAB_FILE);
        let text = fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
        let vocab = Vocab::from_json(&text)?;
        let (digest, encoded) = read_cache(&dir.join(GRAPHS_FILE))?;
        if digest != vocab.digest_bytes() {
            return Err(Error::VocabMismatch {
                expected: hex::encode(digest),
                found: vocab.digest(),
            });
        }
        let graphs = encoded
            .iter()
            .map(|g| decode_graph(g, &vocab))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            graphs,
            label_names: vocab.label_names.items().to_vec(),
        })
    }

    /// Uses the cache when it is readable and consistent; otherwise rebuilds
    /// it from `source` when given.
    pub fn load_or_build(
        dir: &Path,
        source: Option<&Path>,
        min_identifier_freq: usize,
    ) -> Result<Self> {
        match Self::read_cache_dir(dir) {
            Ok(c) => Ok(c),
            Err(e) => match source {
                Some(src) => {
                    let corpus = Self::read_jsonl(src)?;
                    corpus.write_cache_dir(dir, &src.display().to_string(), min_identifier_freq)?;
                    Ok(corpus)
                }
                None => Err(e),
            },
        }
    }
}

/// `dir/name`, creating `dir`.
pub fn ensure_file(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.join(name))
}
