use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stable_trees::runner::{parse_config, resolve_out_dir, run, write_outputs, ExperimentKind};

#[derive(Parser)]
#[command(
    name = "stable-trees",
    version,
    about = "Stable tree simulation and verification lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by an INI config.
    Run {
        config: PathBuf,
        /// Override `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Override `run.workers`.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory; beats the environment variable and `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List experiment kinds.
    List,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List => {
            for k in ExperimentKind::ALL {
                println!("{k}");
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => match execute(&config, seed, workers, out) {
            Ok(code) => ExitCode::from(code),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}

fn execute(
    config: &Path,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
) -> stable_trees::error::Result<u8> {
    let mut cfg = parse_config(&std::fs::read_to_string(config)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    let dir = resolve_out_dir(&cfg, out.as_deref());
    let result = run(&cfg)?;
    for p in write_outputs(&result, &cfg.formats, &dir)? {
        eprintln!("wrote {}", p.display());
    }
    let failed: Vec<_> = result.records.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        eprintln!("FAIL {} [{}] value={:?}", r.statistic, r.params, r.value);
    }
    println!(
        "{}: {} records, {} failed",
        result.experiment,
        result.records.len(),
        failed.len()
    );
    Ok(result.exit_code() as u8)
}
