use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use prognos::pipeline::{RunConfig, Runner, Stage};
use prognos::{Error, Result};

/// Failure-mode discovery and RUL prediction for run-to-failure data.
#[derive(Debug, Parser)]
#[command(name = "prognos", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding stage outputs and the run manifest.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
    /// Overrides the layout, clustering and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Recompute the stage even when its outputs are current.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, filter, scale and window the dataset.
    Preprocess,
    /// Embed the training units into the low-dimensional layout.
    Embed,
    /// Group embedded trajectories into failure modes.
    Cluster,
    /// Cross-validate the joint model.
    Train,
    /// Score the fold models on the test set.
    Evaluate,
    /// Run the η and λ studies and print the summary table.
    Reproduce,
    /// Print the effective configuration as TOML.
    Config,
}

fn stage_of(c: &Command) -> Option<Stage> {
    Some(match c {
        Command::Preprocess => Stage::Preprocess,
        Command::Embed => Stage::Embed,
        Command::Cluster => Stage::Cluster,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::Reproduce => Stage::Reproduce,
        Command::Config => return None,
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Parameter(format!("threads: {e}")))?;
    }
    let Some(stage) = stage_of(&cli.command) else {
        print!("{}", config.to_toml()?);
        return Ok(());
    };
    let mut runner = Runner::open(&cli.run_dir, config, cli.force)?;
    let report = runner.run(stage)?;
    if report.cached {
        println!("{stage}: up to date (cache hit)");
    } else {
        println!(
            "{stage}: done in {:.1}s, {} files",
            report.wall_seconds,
            report.artifacts.len()
        );
    }
    if let Some(s) = report.summary {
        println!("{s}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
