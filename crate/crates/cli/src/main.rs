//! `rcvae`: preprocess data, tune, train, generate, evaluate, ablate and
//! analyze a label-embedding conditional VAE from one JSON config.

mod commands;
mod config;
mod error;
mod logging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Run;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use rcvae_core::hpo::Strategy;

#[derive(Debug, Parser)]
#[command(name = "rcvae", version, about = "Conditional VAE synthesizer for battery charging data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Seed for every stochastic stage except the split.
    #[arg(long)]
    seed: Option<u64>,
    /// Thread count, also used as the number of parallel HPO trials.
    #[arg(long)]
    workers: Option<usize>,
    /// Run directory; defaults to `<output_dir>/<name>` from the config.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build dataset.bin, manifest.csv and scaler.csv.
    Preprocess {
        #[command(flatten)]
        common: Common,
    },
    /// Search hyperparameters; writes hpo_trials.csv and best_hparams.json.
    Hpo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        trial_epochs: Option<usize>,
        /// Use random search instead of Bayesian optimisation.
        #[arg(long)]
        random_search: bool,
    },
    /// Fit the final model; writes checkpoint.rcva and train_history.csv.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        /// Ignore best_hparams.json even if present.
        #[arg(long)]
        ignore_hpo: bool,
    },
    /// Generate physical-unit cycles for a condition into generated/.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eol: u32,
        #[arg(long)]
        ecl: u32,
        #[arg(long, default_value_t = 5)]
        count: usize,
    },
    /// Score test-split reconstructions; writes metrics.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Layer and embedding ablations; writes ablation.csv.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Target such as Decoder_3, Encoder_2, Embedding or None; repeatable.
        #[arg(long = "target")]
        targets: Vec<String>,
        /// Retrain a model per target instead of skipping at inference.
        #[arg(long)]
        retrain: bool,
    },
    /// t-SNE and clustering of the embedding; writes embedding_points.csv,
    /// annotations.csv and embedding.svg.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        perplexity: Option<f64>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Preprocess { common }
            | Command::Hpo { common, .. }
            | Command::Train { common, .. }
            | Command::Generate { common, .. }
            | Command::Evaluate { common }
            | Command::Ablate { common, .. }
            | Command::Analyze { common, .. } => common,
        }
    }

    /// Applies command flags that map onto config fields.
    fn override_config(&self, cfg: &mut RunConfig) {
        match self {
            Command::Hpo {
                budget,
                trial_epochs,
                random_search,
                ..
            } => {
                cfg.hpo.budget = budget.unwrap_or(cfg.hpo.budget);
                cfg.hpo.trial_epochs = trial_epochs.unwrap_or(cfg.hpo.trial_epochs);
                if *random_search {
                    cfg.hpo.strategy = Strategy::Random;
                }
            }
            Command::Train { epochs, patience, .. } => {
                cfg.train.max_epochs = epochs.unwrap_or(cfg.train.max_epochs);
                cfg.train.patience = patience.unwrap_or(cfg.train.patience);
            }
            Command::Analyze {
                clusters, perplexity, ..
            } => {
                cfg.analyze.clusters = clusters.unwrap_or(cfg.analyze.clusters);
                cfg.analyze.tsne.perplexity = perplexity.unwrap_or(cfg.analyze.tsne.perplexity);
            }
            _ => {}
        }
    }
}

fn setup(command: &Command) -> CliResult<Run> {
    let common = command.common();
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = common.workers {
        if workers == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        cfg.hpo.workers = workers;
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    command.override_config(&mut cfg);
    cfg.propagate_shared();
    cfg.validate()?;
    let dir = common.run_dir.clone().unwrap_or_else(|| cfg.run_dir());
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Output {
        path: dir.clone(),
        source,
    })?;
    logging::attach_file(&dir.join(commands::LOG)).map_err(|source| CliError::Output {
        path: dir.join(commands::LOG),
        source,
    })?;
    let run = Run { cfg, dir };
    run.echo_config()?;
    Ok(run)
}

fn execute(command: &Command) -> CliResult<()> {
    let run = setup(command)?;
    log::info!("rcvae {command:?}");
    match command {
        Command::Preprocess { .. } => commands::preprocess(&run),
        Command::Hpo { .. } => commands::hpo(&run),
        Command::Train { ignore_hpo, .. } => commands::train_cmd(&run, !ignore_hpo),
        Command::Generate { eol, ecl, count, .. } => commands::generate(&run, *eol, *ecl, *count),
        Command::Evaluate { .. } => commands::evaluate(&run),
        Command::Ablate { targets, retrain, .. } => commands::ablate_cmd(&run, targets, *retrain),
        Command::Analyze { .. } => commands::analyze_cmd(&run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    logging::init();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            log::logger().flush();
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
