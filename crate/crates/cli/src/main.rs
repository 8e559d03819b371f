use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use jic_core::fetch::{fetch_dump, HttpPageSource, DEFAULT_BASE_URL};
use jic_core::pipeline::{Pipeline, PipelineConfig, Target};

#[derive(Parser)]
#[command(name = "jic", version, about = "Build journal-grounded dialogue datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one pipeline stage, or `all`.
    Run(RunArgs),
    /// Download a submission dump from a PullPush-compatible API.
    Fetch(FetchArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// ingest, cluster, traits, filter, generate, toxicity, split, stats,
    /// raft, evaluate, or all.
    #[arg(long)]
    stage: String,
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_pairs: Option<usize>,
    /// Use the local fallback clients instead of remote services.
    #[arg(long)]
    offline: bool,
    /// Continue even though the config hash differs from the manifest.
    #[arg(long)]
    force: bool,
    /// Predictions file for `evaluate`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    workdir: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FetchArgs {
    #[arg(long, default_value = "Journaling")]
    source: String,
    #[arg(long, default_value_t = 1000)]
    limit: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = DEFAULT_BASE_URL)]
    base_url: String,
}

fn load_config(args: &RunArgs) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(b) = args.beta {
        cfg.beta = b;
    }
    if let Some(s) = args.seed {
        cfg.set_seed(s);
    }
    if let Some(m) = args.max_pairs {
        cfg.generation.max_pairs = Some(m);
    }
    if args.offline {
        cfg.offline = true;
    }
    if let Some(p) = &args.predictions {
        cfg.paths.predictions = Some(p.clone());
    }
    if let Some(w) = &args.workdir {
        cfg.paths.workdir = w.clone();
    }
    if let Some(c) = &args.corpus {
        cfg.paths.corpus = c.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let target: Target = args.stage.parse()?;
    let cfg = load_config(&args)?;
    let summary = Pipeline::from_config(cfg)?.run(target, args.force)?;
    let names: Vec<&str> = summary.completed.iter().map(|s| s.name()).collect();
    println!("run {} completed: {}", summary.run_id, names.join(", "));
    Ok(())
}

fn fetch(args: FetchArgs) -> anyhow::Result<()> {
    let pages = HttpPageSource::new(&args.base_url, Duration::from_secs(60));
    let n =
        fetch_dump(&pages, &args.source, args.limit, &args.out).with_context(|| format!("fetching {}", args.source))?;
    println!("wrote {n} records to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Fetch(a) => fetch(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
