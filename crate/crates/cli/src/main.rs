use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod output;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "quicksync", version, about = "QuickSync protocol simulator and finality analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "QUICKSYNC_OUT", default_value = ".")]
    pub out: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Monte Carlo trials.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Include the near-critical stake rows.
    #[arg(long)]
    pub deep: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a slot simulation and write its trace and metrics.
    Simulate(Common),
    /// Time-to-finality table by adversary stake and confidence.
    FinalityTable(Common),
    /// Monte Carlo confirmation depth across scale factors.
    SSweep(Common),
    /// Borrow-power gain surfaces and the attack effect on finality.
    BorrowPower(Common),
    /// Distribution check of split adversary identities.
    SybilCheck(Common),
    /// Concentration-bound parameters with eta(k) or the k for a target eta.
    Bound(BoundArgs),
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[arg(long = "r_a", alias = "r-a")]
    pub r_a: f64,
    #[arg(long, default_value_t = 8.0)]
    pub s: f64,
    #[arg(long, conflicts_with = "eta")]
    pub k: Option<u64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res: Result<(), CliError> = match cli.command {
        Command::Simulate(c) => commands::simulate(&c),
        Command::FinalityTable(c) => commands::finality_table(&c),
        Command::SSweep(c) => commands::s_sweep(&c),
        Command::BorrowPower(c) => commands::borrow_power(&c),
        Command::SybilCheck(c) => commands::sybil_check(&c),
        Command::Bound(b) => commands::bound(&b),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
