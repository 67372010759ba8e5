use clap::{Parser, Subcommand};
use roughflow_cli::{execute, plots, CliError, Command};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "roughflow", version, about = "Newton-flow stability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Configuration file (flat `section.key = value` TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (for `plots`, the result directory to scan).
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Synthesize a force field and write it as JSON.
    Synth,
    /// Integrate one trajectory.
    Flow,
    /// Q_delta sweep with the step-robustness gate and exponent fit.
    Qdelta,
    /// One-dimensional turning-time separation scan.
    Counterexample,
    /// Distances between flows of successive spectral truncations.
    Mollify,
    /// Write a plotting script for an existing result directory.
    Plots,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    }
    let command = match cli.command {
        Sub::Plots => {
            let (path, stanzas) = plots::emit_plots(&cli.out)?;
            println!("wrote {} ({stanzas} plot stanzas)", path.display());
            return Ok(());
        }
        Sub::Synth => Command::Synth,
        Sub::Flow => Command::Flow,
        Sub::Qdelta => Command::Qdelta,
        Sub::Counterexample => Command::Counterexample,
        Sub::Mollify => Command::Mollify,
    };
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
        None => String::new(),
    };
    execute(command, &text, &cli.out, cli.seed)?;
    println!("{} finished; results in {}", command.name(), cli.out.display());
    Ok(())
}
