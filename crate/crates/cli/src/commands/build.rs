use std::path::PathBuf;

use hdhgn::graph::Corpus;

use crate::config::cache_env;
use crate::error::CliResult;

#[derive(Debug, clap::Args)]
pub struct BuildArgs {
    /// Canonical-AST JSON-lines file.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Cache directory [default: HDHGN_CACHE_DIR, else ./cache].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Identifier frequency threshold recorded in the build summary.
    #[arg(long, default_value_t = 2)]
    pub min_freq: usize,
    /// Label manifest [default: FILE.manifest.json when present].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn run(args: BuildArgs) -> CliResult<()> {
    let out = args
        .out
        .or_else(cache_env)
        .unwrap_or_else(|| "cache".into());
    let corpus = Corpus::read_jsonl_with_manifest(&args.input, args.manifest.as_deref())?;
    let s = corpus.write_cache_dir(&out, &args.input.display().to_string(), args.min_freq)?;
    println!("graphs       {}", s.records);
    println!("nodes        {}", s.nodes);
    println!("hyperedges   {}", s.edges);
    println!("ast types    {}", s.ast_types);
    println!("edge types   {}", s.edge_types);
    println!(
        "identifiers  {} (min freq {})",
        s.identifiers, s.min_identifier_freq
    );
    println!("labels       {}", s.labels);
    println!("cache        {}", out.display());
    Ok(())
}
