use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rmmgks::formats::Checkpoint;
use rmmgks::harness::{self, RunConfig};

/// Restarted majorization-minimization solvers for edge-preserving
/// regularization.
#[derive(Parser)]
#[command(name = "rmmgks", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a TOML config and write its artifacts.
    Run { config: PathBuf },
    /// Run several configs on the same problem seed and tabulate RRE / SSIM.
    Compare {
        #[arg(required = true, num_args = 2..)]
        configs: Vec<PathBuf>,
    },
    /// Print the contents of a basis checkpoint.
    InspectCheckpoint { file: PathBuf },
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("reading {}", path.display()))
}

fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::default().default_filter_or(level.unwrap_or("warn"));
    let _ = env_logger::Builder::from_env(env).try_init();
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config)?;
            init_logging(cfg.verbosity.as_deref());
            let s = harness::run(&cfg)?;
            println!(
                "{}: rre = {:.6} ssim = {:.6} iterations = {} peak basis = {} -> {}",
                s.label,
                s.rre,
                s.ssim,
                s.iterations,
                s.peak_basis,
                s.output.display()
            );
        }
        Command::Compare { configs } => {
            let mut runs = Vec::new();
            for (i, path) in configs.iter().enumerate() {
                let cfg = load(path)?;
                if i == 0 {
                    init_logging(cfg.verbosity.as_deref());
                }
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("run{i}"));
                runs.push((name, cfg));
            }
            let rows = harness::compare(&runs)?;
            print!("{}", harness::summary_csv(&rows));
            println!();
            print!("{}", harness::summary_markdown(&rows));
        }
        Command::InspectCheckpoint { file } => {
            init_logging(None);
            let c = Checkpoint::load(&file).with_context(|| format!("reading {}", file.display()))?;
            print!("{}", harness::describe_checkpoint(&c));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
