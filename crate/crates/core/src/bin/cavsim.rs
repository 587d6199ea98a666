use std::path::PathBuf;
use std::process::ExitCode;

use cavsim::runner::{run_config, Overrides};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cavsim", version, about = "Coupled-cavity state-preparation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Replace the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replace the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => match run_config(&config, &Overrides { seed, out }) {
            Ok(rep) => {
                log::info!("wrote {} files to {} in {:.2} s", rep.files.len(), rep.out_dir.display(), rep.wall_time_s);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
