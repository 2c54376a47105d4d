use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

use traj_georef::pipeline::{
    align_stage, evaluate_stage, generate, match_stage, run_pipeline, PipelineConfig, PipelineError,
};

/// Geo-reference vehicle trajectories against an aerial-imagery landmark map.
#[derive(Parser)]
#[command(name = "traj-georef", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenario as input files.
    Generate(Common),
    /// Associate features with landmarks.
    Match(Common),
    /// Jointly align all trajectories to their matches.
    Align(Common),
    /// Score matches and aligned trajectories.
    Evaluate(Common),
    /// Run every stage in order.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random stream (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    verbose: bool,
}

fn execute(cmd: &Command) -> Result<(), PipelineError> {
    let (Command::Generate(c) | Command::Match(c) | Command::Align(c) | Command::Evaluate(c) | Command::Run(c)) = cmd;
    let mut cfg = PipelineConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.apply_seed(seed);
    }
    if let Some(out) = &c.out {
        cfg.output.dir = out.clone();
    }
    let files = match cmd {
        Command::Generate(_) => generate(&cfg)?,
        Command::Match(_) => match_stage(&cfg)?,
        Command::Align(_) => align_stage(&cfg)?,
        Command::Evaluate(_) | Command::Run(_) => {
            let report = if matches!(cmd, Command::Run(_)) {
                run_pipeline(&cfg)?
            } else {
                evaluate_stage(&cfg)?
            };
            print!("{}", report.to_text());
            return Ok(());
        }
    };
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Generate(c) | Command::Match(c) | Command::Align(c) | Command::Evaluate(c) | Command::Run(c)) =
        &cli.command;
    let level = if c.verbose { LevelFilter::Info } else { LevelFilter::Warn };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
