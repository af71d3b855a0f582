use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use periparab::cli::{run, Command};

#[derive(Parser)]
#[command(name = "periparab", version, about = "Periodic solutions of perturbed parabolic problems")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute a K-approximate periodic solution.
    Solve(Common),
    /// Pick the smallest contracting split.
    ChooseK(Common),
    /// Identify the perturbation and head from observations.
    Identify(Common),
    /// Run the neutral-mode heat equation scenario.
    Example34(Common),
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = std::env::var("PERIPARAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second initialization only fails if something else built the pool first
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (command, common) = match args.command {
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::ChooseK(c) => (Command::ChooseK, c),
        Cmd::Identify(c) => (Command::Identify, c),
        Cmd::Example34(c) => (Command::Example34, c),
    };
    ExitCode::from(run(command, &common.config, &common.out_dir) as u8)
}
