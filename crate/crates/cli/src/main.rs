use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fiberheat_cli::output::Status;
use fiberheat_cli::{run_experiment, CliError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fiberheat", version, about = "Anisotropic heat conduction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// List the available experiments.
    ListExperiments,
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<18} {}", e.name(), e.description());
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("{}: ok ({})", config.display(), cfg.resolved.experiment);
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run_experiment(&cfg)?;
            for row in summary.rows.iter().filter(|r| r.status != Status::Info) {
                println!("{:4} {} = {:.6e} ({})", row.status.name(), row.quantity, row.value, row.expected);
            }
            println!("wrote {}", cfg.resolved.output_dir.display());
        }
    }
    Ok(())
}
