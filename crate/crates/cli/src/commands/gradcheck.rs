use std::fs;
use std::path::PathBuf;

use hdhgn::model::ModelConfig;
use hdhgn::tensor::Fault;
use hdhgn::train::gradcheck::{small_model, THRESHOLD};
use hdhgn::train::{gradient_check, GradcheckOptions};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FaultArg {
    /// Break the negative-branch derivative of ELU.
    EluBackward,
}

#[derive(Debug, clap::Args)]
pub struct GradcheckArgs {
    /// First seed; each seed draws its own graph, class count and
    /// parameters.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds to check.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Model configuration JSON [default: a two-layer, width-16 model].
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    /// Minimum number of sampled coordinates per seed.
    #[arg(long, default_value_t = 200)]
    pub coordinates: usize,
    /// Check with dropout off instead of a fixed dropout mask.
    #[arg(long)]
    pub no_dropout: bool,
    /// Deliberately corrupt a backward rule; the check must then fail.
    #[arg(long, value_enum)]
    pub fault: Option<FaultArg>,
}

pub fn run(args: GradcheckArgs) -> CliResult<()> {
    let model = match &args.model_config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| hdhgn::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str::<ModelConfig>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => small_model(),
    };
    model.validate_unresolved()?;
    let opts = GradcheckOptions {
        dropout: !args.no_dropout,
        fault: args.fault.map(|FaultArg::EluBackward| Fault::EluBackward),
        coordinates: args.coordinates,
        ..Default::default()
    };
    let (mut worst, mut nan) = (0.0f64, false);
    for seed in args.seed..args.seed.saturating_add(args.seeds.max(1)) {
        let r = gradient_check(&model, seed, &opts)?;
        println!(
            "seed {seed}: max_rel_err {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e}; {} nodes, {} classes, {} coordinates)",
            r.max_rel_err, r.worst_param, r.worst_index, r.analytic, r.numeric, r.nodes, r.classes, r.coordinates
        );
        nan |= r.max_rel_err.is_nan();
        worst = worst.max(r.max_rel_err);
    }
    if !nan && worst < THRESHOLD {
        println!("PASS max_rel_err < {THRESHOLD:e}");
        Ok(())
    } else {
        let shown = if nan {
            "NaN".to_string()
        } else {
            format!("{worst:.3e}")
        };
        println!("FAIL max_rel_err {shown} >= {THRESHOLD:e}");
        Err(CliError::Verification(format!(
            "gradient check failed: {shown}"
        )))
    }
}
