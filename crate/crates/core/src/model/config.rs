use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Variant, Vocab};

/// Architectural hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub layers: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    /// Filled from the vocabulary when zero.
    pub num_classes: usize,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 4,
            embed_dim: 128,
            hidden_dim: 128,
            heads: 8,
            dropout: 0.2,
            num_classes: 0,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    /// Full check, including a resolved class count.
    pub fn validate(&self) -> Result<()> {
        self.validate_unresolved()?;
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        Ok(())
    }

    /// Everything except the class count, which may still be 0 (from the
    /// vocabulary).
    pub fn validate_unresolved(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.layers == 0 {
            return fail("layers must be at least 1".into());
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return fail("embedding and hidden widths must be positive".into());
        }
        if self.heads == 0 || !self.hidden_dim.is_multiple_of(self.heads) {
            return fail(format!(
                "hidden_dim {} is not divisible by {} heads",
                self.hidden_dim, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    /// Copy with `num_classes` taken from the vocabulary when unset.
    pub fn resolved(&self, vocab: &Vocab) -> Self {
        let mut c = self.clone();
        if c.num_classes == 0 {
            c.num_classes = vocab.num_classes();
        }
        c
    }
}

/// Row counts of the lookup tables, derived from the vocabulary and variant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableSizes {
    /// `(kind name, rows)` per node-kind code.
    pub node_tables: Vec<(&'static str, usize)>,
    pub edge_types: usize,
}

impl TableSizes {
    pub fn new(vocab: &Vocab, variant: Variant) -> Self {
        if variant == Variant::NoHetero {
            TableSizes {
                node_tables: vec![("node", vocab.merged_values().len)],
                edge_types: 1,
            }
        } else {
            TableSizes {
                node_tables: vec![
                    ("ast", vocab.ast_values.len()),
                    ("identifier", vocab.identifier_values.len()),
                ],
                edge_types: vocab.edge_types.len(),
            }
        }
    }
}
