use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "minkflow",
    about = "Anisotropic shrinking flow on support functions and L_p Minkowski solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the normalized (or unnormalized) flow from a config file.
    Flow {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for randomized shapes (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve the L_p Minkowski problem u^{1-p} sigma_n = phi.
    #[command(name = "lp-solve")]
    LpSolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the inequality/identity verification suites.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MINKFLOW_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Flow { config, out, seed } => {
            minkflow::io::cmd_flow(&config, out.as_deref(), seed)
        }
        Command::LpSolve { config, out, seed } => {
            minkflow::io::cmd_lp_solve(&config, out.as_deref(), seed)
        }
        Command::Verify { config, out, seed } => {
            minkflow::io::cmd_verify(&config, out.as_deref(), seed)
        }
    };
    ExitCode::from(code as u8)
}
