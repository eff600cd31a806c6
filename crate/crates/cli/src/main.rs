//! `crowdopinion` command-line driver.
//!
//! Exit codes: 0 on success, 1 for bad input (usage, config, data), 2 for
//! runtime failures.

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use crowdopinion::evaluation::SurfaceMode;
use crowdopinion::io::RunConfig;
use crowdopinion::learner::Architecture;
use crowdopinion::pipeline::Method;
use crowdopinion::selection::SelectionMode;
use crowdopinion::Split;

#[derive(Parser, Debug)]
#[command(
    name = "crowdopinion",
    version,
    about = "Pool crowd label distributions and train distributional learners"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Seed for stage 1, the learner and any sampling. Overrides `seed` and
    /// `learner.seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Key-value run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override one config key, e.g. `--set learner.dropout=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Corpus JSONL. Overrides `dataset` from the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Seed of the downsample and train/dev/test split.
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one stage-1 method and write pooled labels plus the model.
    Pool(PoolArgs),
    /// Search p / r for each (method, w) and rank the winners.
    Select(SelectArgs),
    /// Train a learner on pooled labels or a baseline target source.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Entropy histogram and, given an evaluation, surfaced examples.
    Report(ReportArgs),
    /// Write the planted-cluster synthetic corpus and a matching config.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct PoolArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    method: Method,
    /// Feature weight in the mixed space.
    #[arg(long)]
    w: f64,
    /// Number of clusters (kmeans, gmm, fmm, lda).
    #[arg(long)]
    p: Option<usize>,
    /// KL-ball radius (nbp).
    #[arg(long)]
    r: Option<f64>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Methods to search. Overrides `methods`.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    /// Mixing weights. Overrides `w_grid`.
    #[arg(long = "w", value_delimiter = ',')]
    w_grid: Vec<f64>,
    /// Cluster counts to try instead of `p_min..=p_max`.
    #[arg(long, value_delimiter = ',')]
    p: Vec<usize>,
    /// Radii to try. Overrides `r_grid`.
    #[arg(long, value_delimiter = ',')]
    r: Vec<f64>,
    /// Rank by stage-1 score or by the dev KL of a trained learner.
    #[arg(long, default_value = "stage1")]
    mode: SelectionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Targets {
    Pooled,
    Pd,
    Sl,
    Ds,
}

impl fmt::Display for Targets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Targets::Pooled => "pooled",
            Targets::Pd => "pd",
            Targets::Sl => "sl",
            Targets::Ds => "ds",
        })
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    targets: Targets,
    /// Pooled-label JSONL (default: `<out>/pooled.jsonl`).
    #[arg(long)]
    pooled: Option<PathBuf>,
    /// Overrides `learner.architecture`.
    #[arg(long)]
    arch: Option<Architecture>,
    /// Overrides `learner.max_epochs`.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Learner checkpoint (default: `<out>/checkpoint.json`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: Split,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Restrict the entropy report to one split.
    #[arg(long)]
    split: Option<Split>,
    /// Evaluation JSON to surface examples from.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Number of surfaced examples.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "lowest-kl")]
    mode: SurfaceMode,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    clusters: usize,
    #[arg(long, default_value_t = 5)]
    labels: usize,
    #[arg(long, default_value_t = 64)]
    feature_dim: usize,
}

/// Bad usage that clap cannot see, such as a missing `--p`.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Config file, then `--set` overrides, then the common flags.
fn run_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let mut cfg = RunConfig::load(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            // dataset paths in a config file are relative to that file
            if let (Some(d), Some(dir)) = (&cfg.dataset, path.parent()) {
                if d.is_relative() {
                    cfg.dataset = Some(dir.join(d));
                }
            }
            cfg
        }
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.learner.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    fn io_code(e: &std::io::Error) -> u8 {
        if e.kind() == std::io::ErrorKind::NotFound {
            1
        } else {
            2
        }
    }
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<crowdopinion::Error>() {
            return match e {
                crowdopinion::Error::Io(io) => io_code(io),
                e if e.is_validation() => 1,
                _ => 2,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return io_code(io);
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
