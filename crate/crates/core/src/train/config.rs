use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative split sizes; normalized before use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 6.0,
            val: 2.0,
            test: 2.0,
        }
    }
}

impl SplitRatios {
    pub fn normalized(&self) -> Result<(f64, f64, f64)> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(format!(
                "split ratios must be non-negative, got {parts:?}"
            )));
        }
        let total: f64 = parts.iter().sum();
        if total <= 0.0 {
            return Err(Error::Config("split ratios sum to zero".into()));
        }
        Ok((self.train / total, self.val / total, self.test / total))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub trials: usize,
    pub split: SplitRatios,
    /// Split within each label instead of over the whole dataset.
    pub stratified: bool,
    pub min_identifier_freq: usize,
    /// Emit a progress line every this many epochs (0 disables).
    pub report_every: usize,
    /// Reject non-finite values inside the network, not just in the loss.
    pub check_finite: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 5e-5,
            trials: 5,
            split: SplitRatios::default(),
            stratified: false,
            min_identifier_freq: 2,
            report_every: 1,
            check_finite: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        self.split.normalized()?;
        Ok(())
    }
}
