use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybridrank::config::RunConfig;
use hybridrank::pipeline::{self, PipelineError, ASSESSMENT_CSV, REPORT_JSON};

/// Allocates ranking work between a recommender and an LLM, per user.
#[derive(Parser)]
#[command(name = "hybridrank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full hybrid run: train, assess, query the LLM for weak users, merge, report.
    Run(Common),
    /// Train and classify users only; no LLM calls.
    Assess(Common),
    /// Write prompts for the weak users of a previous assessment.
    Prompts(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Uses this seed for the split and every other random stream.
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Config(String),
    Stage(PipelineError),
}

fn load(args: &Common) -> Result<RunConfig, Failure> {
    let mut config = RunConfig::load(&args.config).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        config.override_seeds(seed);
    }
    Ok(config)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(args) => {
            let config = load(&args)?;
            let report = pipeline::run_hybrid(&config).map_err(Failure::Stage)?;
            print!("{}", report.table());
            log::info!("report written to {}", config.output_dir.join(REPORT_JSON).display());
        }
        Command::Assess(args) => {
            let config = load(&args)?;
            let assessed = pipeline::run_assess(&config).map_err(Failure::Stage)?;
            println!(
                "{} users assessed, {} weak; table at {}",
                assessed.assessments.len(),
                assessed.weak.len(),
                config.output_dir.join(ASSESSMENT_CSV).display()
            );
        }
        Command::Prompts(args) => {
            let config = load(&args)?;
            let n = pipeline::run_prompts(&config).map_err(Failure::Stage)?;
            println!("{n}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(message)) => {
            eprintln!("error: invalid config: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
