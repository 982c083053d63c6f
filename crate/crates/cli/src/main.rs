use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use precis_cli::{run_experiment, ConfigFile, Experiment};

#[derive(Parser)]
#[command(name = "precis", version, about = "Run the estimation and path-planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV outputs
    Run {
        experiment: Experiment,
        /// TOML file with `seeds` and a [dem] or [ipp] section
        #[arg(long)]
        config: Option<PathBuf>,
        /// run this single seed instead of the configured list
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            eprint!("{e}");
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    let Command::Run { experiment, config, seed, out } = cli.command;
    let result = config
        .as_deref()
        .map(ConfigFile::load)
        .unwrap_or_else(|| Ok(ConfigFile::default()))
        .and_then(|cfg| run_experiment(experiment, &cfg, seed, &out));
    match result {
        Ok(summary) => {
            eprintln!(
                "{}: {} seed(s), {} file(s) in {} ({:.1} s)",
                summary.experiment,
                summary.seeds.len(),
                summary.files.len(),
                out.display(),
                summary.wall_seconds
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("precis: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
