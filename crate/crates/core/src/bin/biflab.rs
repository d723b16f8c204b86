use std::path::PathBuf;
use std::process::ExitCode;

use biflab::cli::{render_file, run_file, RunOptions, Scale, CACHE_ENV};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "biflab", version, about = "Bifurcation currents of holomorphic polynomial families")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the tasks of a configuration file.
    Run {
        config: PathBuf,
        /// Overrides `run.output`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Renders a grid CSV as an 8-bit PGM.
    Render {
        grid: PathBuf,
        #[arg(long, default_value = "linear")]
        scale: Scale,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match cli.command {
        Command::Run { config, output } => {
            let opts = RunOptions {
                seed: cli.seed,
                output,
                cache_dir: std::env::var_os(CACHE_ENV).map(PathBuf::from),
            };
            match run_file(&config, &opts) {
                Ok(outcome) => {
                    for t in &outcome.manifest.tasks {
                        match &t.error {
                            Some(e) => eprintln!("{}: {} ({e})", t.name, t.status),
                            None => eprintln!("{}: ok in {:.2}s", t.name, t.seconds),
                        }
                    }
                    eprintln!("artifacts in {}", outcome.output.display());
                    ExitCode::from(outcome.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Render { grid, scale, output } => match render_file(&grid, scale, &output) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
