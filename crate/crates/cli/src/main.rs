use clap::{Parser, Subcommand};
use planecast_cli::commands::{self, ReplayArgs, ServeArgs, SimulateArgs, StatsArgs};

#[derive(Parser)]
#[command(name = "planecast", version, about = "Smartphone plane-casting 3D cursor host")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Host a live session for phone and viewer connections.
    Serve(ServeArgs),
    /// Run full sessions with the scripted controller.
    Simulate(SimulateArgs),
    /// Re-run a session log and write its trials.
    Replay(ReplayArgs),
    /// Per-level means and repeated-measures ANOVA over a trials CSV.
    Stats(StatsArgs),
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Serve(args) => commands::serve(&args),
        Command::Simulate(args) => {
            let table = commands::simulate(&args)?;
            println!("{} trials from {} subject(s) -> {}", table.len(), table.subjects().len(), args.out.display());
            Ok(())
        }
        Command::Replay(args) => {
            let table = commands::replay_trace(&args)?;
            println!("{} trials -> {}", table.len(), args.out.display());
            Ok(())
        }
        Command::Stats(args) => {
            print!("{}", commands::stats(&args)?);
            Ok(())
        }
    }
}
