use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use bmlp::Gamma;
use bmlp_cli::config::parse_dims;
use bmlp_cli::error::{CliError, EXIT_IO};
use bmlp_cli::{bench, commands, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bmlp", version, about = "Gradient-free training of binary multi-layer perceptrons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write its checkpoint and per-epoch metrics.
    Train(RunArgs),
    /// Report per-layer and final accuracy of a checkpoint on the test split.
    Eval(RunArgs),
    /// Time the packed kernel against a byte-per-weight baseline.
    Bench {
        #[arg(long, default_value = "256,1024,4096")]
        sizes: String,
        /// Minimum time spent on each matvec measurement.
        #[arg(long, default_value_t = 200)]
        budget_ms: u64,
        /// Mini-batches per train_batch measurement.
        #[arg(long, default_value_t = 20)]
        batches: u32,
    },
    /// Per-pattern operation counts and bit widths for a network shape.
    CostModel {
        #[arg(long)]
        dims: String,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value = "auto")]
        gamma: String,
    },
}

/// Every flag mirrors a config-file key and overrides it.
#[derive(Args)]
struct RunArgs {
    /// File of `key = value` lines applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mnist, fashion or features.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    train_features: Option<String>,
    #[arg(long)]
    train_labels: Option<String>,
    #[arg(long)]
    test_features: Option<String>,
    #[arg(long)]
    test_labels: Option<String>,
    /// Comma-separated sizes, input first, e.g. 784,1035,1035.
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    /// Initial reinforcement probability.
    #[arg(long)]
    pr: Option<String>,
    /// Margin factor, as a fraction (1/4) or decimal (0.25).
    #[arg(long)]
    robustness: Option<String>,
    /// Group size, or `auto` for the divisor nearest 75 per layer.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Pre-activation bit width, or `off`.
    #[arg(long)]
    clamp_bits: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    share_classifier: Option<String>,
    /// Checkpoint written by `train`, read by `eval`.
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    eval_every: Option<String>,
    /// Record wall-clock milliseconds in the metrics file.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    timing: Option<String>,
    /// Continue training from a checkpoint.
    #[arg(long)]
    resume: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("dataset", &self.dataset),
            ("data-dir", &self.data_dir),
            ("train-features", &self.train_features),
            ("train-labels", &self.train_labels),
            ("test-features", &self.test_features),
            ("test-labels", &self.test_labels),
            ("dims", &self.dims),
            ("classes", &self.classes),
            ("epochs", &self.epochs),
            ("batch-size", &self.batch_size),
            ("pr", &self.pr),
            ("robustness", &self.robustness),
            ("gamma", &self.gamma),
            ("seed", &self.seed),
            ("clamp-bits", &self.clamp_bits),
            ("share-classifier", &self.share_classifier),
            ("checkpoint", &self.checkpoint),
            ("metrics", &self.metrics),
            ("eval-every", &self.eval_every),
            ("timing", &self.timing),
            ("resume", &self.resume),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{key}"))?;
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            commands::train(&cfg, &mut out)?;
        }
        Command::Eval(args) => {
            let cfg = args.resolve()?;
            let ckpt = cfg.checkpoint.clone().ok_or_else(|| CliError::Config("eval needs --checkpoint".into()))?;
            commands::eval(&ckpt, &cfg)?.write_to(&mut out)?;
        }
        Command::Bench { sizes, budget_ms, batches } => {
            let sizes = sizes
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| CliError::Config(format!("bad size {s:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            bench::run_bench(&sizes, Duration::from_millis(budget_ms), batches, &mut out)?;
        }
        Command::CostModel { dims, classes, gamma } => {
            let dims = parse_dims(&dims)?;
            let gamma: Gamma = gamma.parse().map_err(CliError::from)?;
            commands::cost_report(&dims, classes, gamma, &mut out)?;
        }
    }
    out.flush().context("flushing output")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.chain().find_map(|c| c.downcast_ref::<CliError>()).map_or(EXIT_IO, |c| c.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
