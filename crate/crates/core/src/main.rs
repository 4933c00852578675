use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use robust_trajopt::cli::{export_plot_data, run, Mode, RunConfig};
use robust_trajopt::Result;

#[derive(Debug, Parser)]
#[command(name = "robust-trajopt", version, about = "Robust trajectory optimization of a supersonic transport descent")]
struct Args {
    /// TOML run configuration (or a previous run's metadata.json).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write plot-ready CSVs for a completed run.
    Export {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn init_threads() {
    let Ok(v) = std::env::var("RTOPT_THREADS") else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring RTOPT_THREADS={v}: expected a positive integer"),
    }
}

fn execute(args: Args) -> Result<()> {
    if let Some(Command::Export { run, force }) = args.command {
        for path in export_plot_data(&run, force)? {
            println!("{}", path.display());
        }
        return Ok(());
    }
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    let study = run(config, args.force)?;
    for case in &study.cases {
        println!("{}: archive {} hypervolume {}", case.name, case.archive_size, case.hypervolume);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    init_threads();
    match execute(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
