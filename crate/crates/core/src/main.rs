use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use perifuse::cli::{self, Overrides, RunConfig};
use perifuse::{Error, Result};

#[derive(Parser)]
#[command(name = "perifuse", version, about = "Cross-sensor periocular verification and score fusion")]
struct Args {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the configured work directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize and equalize every manifest image.
    Prepare,
    /// Extract templates for the enabled built-in comparators.
    Extract,
    /// Score the trial protocol with the built-in comparators.
    Score,
    /// Merge built-in and external scores into one score file.
    Ingest,
    /// Train fusion models and write fused scores.
    Fuse,
    /// Evaluate, search comparator subsets and write reports.
    Eval,
    /// Run every step of the experiment.
    Run,
    /// Write a synthetic score file from the config.
    Simulate,
}

fn run(args: Args) -> Result<()> {
    if let Some(n) = args.jobs {
        if n == 0 {
            return Err(Error::config("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(e.to_string()))?;
    }
    let path = args.config.ok_or_else(|| Error::config("--config is required"))?;
    let cfg = RunConfig::load(
        &path,
        &Overrides {
            seed: args.seed,
            out: args.out,
        },
    )?;
    match args.command {
        Command::Prepare => {
            let s = cli::cmd_prepare(&cfg)?;
            println!("prepared {} image(s), {} up to date", s.computed, s.skipped);
        }
        Command::Extract => {
            println!("extracted {} template(s)", cli::cmd_extract(&cfg)?);
        }
        Command::Score => {
            println!("scored {} trial(s)", cli::cmd_score(&cfg)?.len());
        }
        Command::Ingest => {
            println!("score set has {} trial(s)", cli::cmd_ingest(&cfg)?.len());
        }
        Command::Fuse => {
            println!("trained {} model(s)", cli::cmd_fuse(&cfg)?.models().len());
        }
        Command::Eval => print!("{}", cli::cmd_eval(&cfg)?.table.text),
        Command::Run => print!("{}", cli::cmd_run_experiment(&cfg)?.table.text),
        Command::Simulate => {
            println!("simulated {} trial(s)", cli::cmd_simulate(&cfg)?.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PERIFUSE_LOG", "warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
