use clap::{Parser, Subcommand};
use minka_cli::config::load_config;
use minka_cli::runner;
use minka_cli::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Minor-concentration experiments: matrix analysis, Gaussian baselines,
/// Jacobian probing, interleaved training, and the staircase construction.
#[derive(Parser)]
#[command(name = "minka", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minor tables and concentration reports for one matrix.
    Minors(RunArgs),
    /// Concentration distribution over a Gaussian matrix ensemble.
    Baseline(RunArgs),
    /// Jacobian minor concentration of a saved checkpoint at probe points.
    McAnalyze(RunArgs),
    /// Interleaved task/concentration training across nudge strengths.
    Train(RunArgs),
    /// Staircase embedding plus the outer-function iteration.
    KaDemo(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (JSON). Relative paths inside it resolve against
    /// its own directory.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing, never clobbered on failure.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn kind(&self) -> &'static str {
        match self {
            Command::Minors(_) => "minors",
            Command::Baseline(_) => "baseline",
            Command::McAnalyze(_) => "mc-analyze",
            Command::Train(_) => "train",
            Command::KaDemo(_) => "ka-demo",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Minors(a)
            | Command::Baseline(a)
            | Command::McAnalyze(a)
            | Command::Train(a)
            | Command::KaDemo(a) => a,
        }
    }
}

fn execute(command: &Command) -> Result<(), CliError> {
    let args = command.args();
    let (mut config, base_dir) = load_config(&args.config)?;
    if config.kind() != command.kind() {
        return Err(CliError::config(
            "kind",
            format!(
                "config is {:?} but the {} subcommand was invoked",
                config.kind(),
                command.kind()
            ),
        ));
    }
    if let Some(seed) = args.seed {
        config.set_seed(seed);
    }
    let manifest = runner::run(&config, &base_dir, &args.out)?;
    println!(
        "{}: wrote {} artifacts to {} (seed {})",
        manifest.kind,
        manifest.artifacts.len(),
        args.out.display(),
        manifest.seed
    );
    for entry in &manifest.artifacts {
        println!("  {}  {}  {} bytes", entry.sha256, entry.name, entry.bytes);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
