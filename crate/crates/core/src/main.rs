use clap::{Parser, Subcommand};

use dpd_screen::commands::{
    cmd_isis, cmd_robustness_curves, cmd_screen, cmd_simulate, CurvesArgs, IsisArgs, ScreenArgs,
    SimulateArgs,
};

#[derive(Parser)]
#[command(
    name = "dpd-screen",
    version,
    about = "Robust marginal screening for ultra-high-dimensional linear regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank covariates by a marginal association measure and keep the top d.
    Screen(ScreenArgs),
    /// Iterative screening alternating marginal ranking with penalized refits.
    Isis(IsisArgs),
    /// Run a seeded Monte Carlo screening benchmark from a config file.
    Simulate(SimulateArgs),
    /// Emit influence, sensitivity, and efficiency curves as delimited text.
    RobustnessCurves(CurvesArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Screen(args) => cmd_screen(&args),
        Command::Isis(args) => cmd_isis(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::RobustnessCurves(args) => cmd_robustness_curves(&args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
