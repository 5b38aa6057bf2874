use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stackinfer::{execute, resolve_out_dir, CliError, ExperimentConfig, OUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "stackinfer",
    version,
    about = "Run strategic-inference experiments from a JSON config"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Cap on worker threads.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory; overrides the config and $STACKINFER_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            threads,
            out,
        } => {
            if threads == Some(0) {
                return Err(CliError::Config("--threads must be at least 1".into()));
            }
            let cfg = ExperimentConfig::load(&config)?;
            let env = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
            let dir = resolve_out_dir(out, &cfg, env);
            for path in execute(&cfg, &dir, threads)? {
                println!("{}", path.display());
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("{}: ok ({})", config.display(), cfg.study.name());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stackinfer: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
