use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tubeloc::eval::{commands, EvalError, PipelineConfig};

/// Zone classification plus pose refinement on a simulated tube.
#[derive(Debug, Parser)]
#[command(name = "tubeloc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the training and test datasets.
    Generate(Common),
    /// Train the embedding network; writes the model and descriptor database.
    Train(Common),
    /// Partition the training set and triangulate every zone map.
    BuildMap(Common),
    /// Localize every test image; writes per-image results and the trajectory.
    Localize(Common),
    /// Localize and aggregate pose errors.
    Evaluate(Common),
    /// Rerun the pipeline over the configured zone counts and repeats.
    Sweep(Common),
    /// Re-localize with classifications forced off by ±e zones.
    Perturb(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created when missing.
    #[arg(long)]
    out: PathBuf,
    /// Run single-threaded regardless of the config.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig, EvalError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if self.sequential {
            cfg.parallel = false;
        }
        Ok(cfg)
    }
}

fn run(command: &Command) -> Result<(), EvalError> {
    let (common, f): (&Common, fn(&PipelineConfig, &Path) -> Result<(), EvalError>) = match command {
        Command::Generate(c) => (c, commands::generate),
        Command::Train(c) => (c, commands::train),
        Command::BuildMap(c) => (c, commands::build_map),
        Command::Localize(c) => (c, commands::localize),
        Command::Evaluate(c) => (c, commands::evaluate),
        Command::Sweep(c) => (c, commands::sweep),
        Command::Perturb(c) => (c, commands::perturb),
    };
    let cfg = common.load()?;
    f(&cfg, &common.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tubeloc: {e}");
            // 2 for a bad config, 1 for a failure inside a pipeline stage
            ExitCode::from(if e.stage() == "config" { 2 } else { 1 })
        }
    }
}
