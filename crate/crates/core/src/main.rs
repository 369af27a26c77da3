use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use onebit_precoder::cli::{self, Overrides};

#[derive(Parser)]
#[command(name = "onebit", version, about = "1-bit massive MIMO precoding experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// Output directory, overriding `[output].path`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed, overriding `[sweep].base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, env = cli::WORKERS_ENV)]
        workers: Option<usize>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    match args.command {
        Command::Run {
            config,
            out,
            seed,
            workers,
        } => {
            let code = cli::run(&config, &Overrides { out, seed, workers });
            ExitCode::from(code as u8)
        }
    }
}
