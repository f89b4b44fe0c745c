mod config;
mod data;
mod overlay;
mod run;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use config::{RunConfig, UsageError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "msmil", version, about = "Mixed-supervision MIL on superpixel instances")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-slide work; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Fail when any slide fails to prepare.
    #[arg(long, global = true)]
    strict: bool,
    /// Masking ratio; a comma-separated list runs a sweep.
    #[arg(long, global = true, value_delimiter = ',')]
    mask_ratio: Vec<f64>,
    /// Instance-loss mixing weight; a comma-separated list runs a sweep.
    #[arg(long, global = true, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, global = true)]
    folds: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic slide dataset.
    Synth,
    /// Segment slides and cache instance bags.
    Prepare { data: PathBuf },
    /// Cross-validated training on a bag cache.
    Train { cache: PathBuf },
    /// Macro AUC of a checkpoint on cached bags.
    Eval {
        checkpoint: PathBuf,
        cache: PathBuf,
        /// File listing slide ids to evaluate, one per line.
        #[arg(long)]
        subset: Option<PathBuf>,
    },
    /// Slide and instance predictions for cached bags.
    Predict { checkpoint: PathBuf, cache: PathBuf },
    /// Colour a slide's superpixels by predicted class.
    Visualize {
        checkpoint: PathBuf,
        cache: PathBuf,
        data: PathBuf,
        slide: String,
    },
}

/// Resolved settings shared by every command.
pub struct RunContext {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub strict: bool,
    /// `(lambda, mask_ratio)` runs requested on the command line.
    pub sweep: Vec<(f64, f64)>,
}

fn resolve(global: &Global, default_out: &str) -> Result<RunContext, UsageError> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(w) = global.workers {
        cfg.workers = w;
    }
    if let Some(f) = global.folds {
        cfg.folds = f;
    }
    let lambdas = if global.lambda.is_empty() {
        vec![cfg.train.lambda]
    } else {
        global.lambda.clone()
    };
    let masks = if global.mask_ratio.is_empty() {
        vec![cfg.train.mask_ratio]
    } else {
        global.mask_ratio.clone()
    };
    cfg.train.lambda = lambdas[0];
    cfg.train.mask_ratio = masks[0];
    let sweep: Vec<(f64, f64)> = lambdas
        .iter()
        .flat_map(|&l| masks.iter().map(move |&m| (l, m)))
        .collect();
    for &(l, m) in &sweep {
        let mut probe = cfg.clone();
        probe.train.lambda = l;
        probe.train.mask_ratio = m;
        probe.validate()?;
    }
    cfg.validate()?;
    Ok(RunContext {
        cfg,
        out: global.out.clone().unwrap_or_else(|| PathBuf::from(default_out)),
        strict: global.strict,
        sweep,
    })
}

pub fn write_resolved(dir: &Path, cfg: &RunConfig) -> anyhow::Result<String> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let text = cfg.render();
    let path = dir.join("config.resolved");
    std::fs::write(&path, &text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(text)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let default_out = match cli.command {
        Command::Synth => "data",
        Command::Prepare { .. } => "cache",
        _ => "run",
    };
    let ctx = resolve(&cli.global, default_out)?;
    if !matches!(cli.command, Command::Train { .. }) && ctx.sweep.len() > 1 {
        return Err(UsageError("value lists for --lambda and --mask-ratio are only accepted by `train`".into()).into());
    }
    if ctx.cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(ctx.cfg.workers)
            .build_global()
            .context("cannot start worker pool")?;
    }
    match cli.command {
        Command::Synth => data::synth(&ctx),
        Command::Prepare { data } => data::prepare(&ctx, &data),
        Command::Train { cache } => run::train(&ctx, &cache),
        Command::Eval {
            checkpoint,
            cache,
            subset,
        } => run::eval(&ctx, &checkpoint, &cache, subset.as_deref()),
        Command::Predict { checkpoint, cache } => run::predict(&ctx, &checkpoint, &cache),
        Command::Visualize {
            checkpoint,
            cache,
            data,
            slide,
        } => overlay::visualize(&ctx, &checkpoint, &cache, &data, &slide),
    }
}

/// 2 for usage and config problems, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<msmil::Error>(),
                Some(msmil::Error::Config(_) | msmil::Error::ClassSetMismatch(_))
            )
    });
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
