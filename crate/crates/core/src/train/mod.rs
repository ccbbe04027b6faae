//! Splits, the training loop, evaluation, repeated trials, ablations and the
//! finite-difference gradient check.

mod config;
pub mod gradcheck;
mod split;
mod trainer;
mod trials;

pub use config::{SplitRatios, TrainConfig};
pub use gradcheck::{gradient_check, GradcheckOptions, GradcheckReport};
pub use split::{split_dataset, Split};
pub use trainer::{evaluate, train, EpochMetrics, Evaluation, TrainOutcome};
pub use trials::{
    ablation_table, majority_baseline, mean_sd, prepare_trial, run_ablation, run_trial, run_trials,
    CurvePoint, Progress, TrialData, TrialReport, TrialResult, TrialRun,
};
