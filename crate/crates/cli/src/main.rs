use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xlstr::pipeline::{self, RunConfig, ScoreWhitening};
use xlstr::{Error, ProviderKind};

#[derive(Parser)]
#[command(
    name = "xlstr",
    version,
    about = "Whitened-embedding relatedness scoring and source-language filtering"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Balancing seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of whitening directions to keep.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Tolerated Spearman drop before a source language is excluded.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Also fit the final whitening on the target sentences.
    #[arg(long, global = true)]
    include_target_in_fit: bool,
    /// Per-language pair count after balancing.
    #[arg(long, global = true)]
    target_count: Option<usize>,
    /// Embedding backend: file_store, toy or remote.
    #[arg(long, global = true)]
    provider: Option<ProviderKind>,
    /// JSONL embedding store (implies --provider file_store).
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Base URL of an embedding service (implies --provider remote).
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    toy_seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit whitening on a dataset's sentences and write params JSON.
    Fit {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score sentence pairs and write a score report.
    Score {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Whitening params; without it the dataset is self-fitted.
        #[arg(long, conflicts_with = "no_whitening")]
        params: Option<PathBuf>,
        /// Raw cosine scores (baseline).
        #[arg(long)]
        no_whitening: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe source languages against target-fitted whitening.
    Filter {
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long = "source")]
        sources: Vec<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        training: Option<PathBuf>,
    },
    /// Filter, build the training set, fit and predict the target.
    Pipeline {
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long = "source")]
        sources: Vec<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a score report's histogram as CSV.
    ExportHist {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve_config(g: &GlobalOpts) -> xlstr::Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = g.seed {
        cfg.balance.seed = v;
    }
    if let Some(v) = g.k {
        cfg.k = v;
    }
    if let Some(v) = g.delta {
        cfg.delta = v;
    }
    if g.include_target_in_fit {
        cfg.include_target_in_fit = true;
    }
    if let Some(v) = g.target_count {
        cfg.balance.target_count = v;
    }
    if let Some(path) = &g.store {
        cfg.provider.kind = ProviderKind::FileStore;
        cfg.provider.path = Some(path.clone());
        cfg.provider.endpoint = None;
        if g.dim.is_none() {
            cfg.provider.dim = None;
        }
    }
    if let Some(url) = &g.endpoint {
        cfg.provider.kind = ProviderKind::Remote;
        cfg.provider.endpoint = Some(url.clone());
        cfg.provider.path = None;
        if g.dim.is_none() {
            cfg.provider.dim = None;
        }
    }
    if let Some(kind) = g.provider {
        cfg.provider.kind = kind;
    }
    if let Some(v) = g.dim {
        cfg.provider.dim = Some(v);
    }
    if let Some(v) = g.toy_seed {
        cfg.provider.toy_seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn need(path: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> xlstr::Result<PathBuf> {
    path.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("missing --{what} (or paths.{what} in config)")))
}

fn check_exists(paths: &[&Path]) -> xlstr::Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::Config(format!("input not found: {}", p.display())));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> xlstr::Result<()> {
    let cfg = resolve_config(&cli.global)?;
    let paths = cfg.paths.clone();
    match cli.command {
        Command::Fit { dataset, out } => {
            let dataset = need(dataset, &paths.dataset, "dataset")?;
            let out = need(out, &paths.params, "params")?;
            check_exists(&[&dataset])?;
            let s = pipeline::cmd_fit(&cfg, &dataset, &out)?;
            if s.clamped() {
                log::warn!(
                    "k clamped from {} to numerical rank {}",
                    s.requested_k,
                    s.rank
                );
            }
            println!(
                "fit {} sentences: dim {} k {} (rank {})",
                s.fit_count, s.dim, s.k, s.rank
            );
            println!("fingerprint {}", s.fingerprint);
        }
        Command::Score {
            dataset,
            params,
            no_whitening,
            out,
        } => {
            let dataset = need(dataset, &paths.dataset, "dataset")?;
            let out = need(out, &paths.out, "out")?;
            check_exists(&[&dataset])?;
            let mode = if no_whitening {
                ScoreWhitening::None
            } else if let Some(p) = params.or(paths.params.clone()) {
                check_exists(&[&p])?;
                ScoreWhitening::Params(p)
            } else {
                ScoreWhitening::SelfFit
            };
            let report = pipeline::cmd_score(&cfg, &dataset, &mode, &out)?;
            print!("{}", pipeline::render_score_summary(&report));
        }
        Command::Filter {
            target,
            sources,
            report,
            training,
        } => {
            let target = need(target, &paths.target, "target")?;
            let sources = if sources.is_empty() {
                paths.sources.clone()
            } else {
                sources
            };
            let out = paths.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let report = report.unwrap_or_else(|| out.join(pipeline::FILTER_REPORT_FILE));
            let training = training.unwrap_or_else(|| out.join(pipeline::TRAINING_FILE));
            check_exists(&[&target])?;
            check_exists(&sources.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
            let r = pipeline::cmd_filter(&cfg, &target, &sources, &report, &training)?;
            print!("{}", pipeline::render_filter_table(&r));
        }
        Command::Pipeline {
            target,
            sources,
            out_dir,
        } => {
            let target = need(target, &paths.target, "target")?;
            let sources = if sources.is_empty() {
                paths.sources.clone()
            } else {
                sources
            };
            let out_dir = need(out_dir, &paths.out, "out")?;
            check_exists(&[&target])?;
            check_exists(&sources.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
            let s = pipeline::cmd_pipeline(&cfg, &target, &sources, &out_dir)?;
            print!("{}", pipeline::render_filter_table(&s.filter));
            println!(
                "training pairs {}  params {}",
                s.training_pairs, s.params_fingerprint
            );
            print!("{}", pipeline::render_score_summary(&s.scores));
        }
        Command::ExportHist { report, out } => {
            check_exists(&[&report])?;
            print!("{}", pipeline::cmd_export_hist(&report, &out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let obj = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{obj}");
            ExitCode::FAILURE
        }
    }
}
