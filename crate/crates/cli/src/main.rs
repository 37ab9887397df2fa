mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulate single-qubit channels with signed time-partition decompositions.
#[derive(Parser, Debug)]
#[command(name = "qchan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Report Kraus operators, affine and canonical forms, the complete-positivity
    /// check, and the signed decomposition of a channel.
    Channel(ChannelCmd),
    /// Print the signed decomposition and its acquisition-time partition.
    Decompose(ChannelCmd),
    /// Sweep λ and tabulate fidelity, purity and concurrence.
    Sweep(SweepCmd),
    /// Run the simulated experiment once and reconstruct the output state.
    Tomo(TomoCmd),
}

#[derive(Args, Debug, Clone)]
pub struct ChannelArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Degrees.
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Degrees.
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// `ideal` or `werner:V`; defaults to a Werner source with fidelity 0.93.
    #[arg(long)]
    pub source: Option<String>,
    /// Coincidences per second.
    #[arg(long, default_value_t = qchan_core::experiment::DEFAULT_PAIR_RATE)]
    pub rate: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Linear)]
    pub method: MethodArg,
    /// Use expected counts instead of Poisson draws.
    #[arg(long)]
    pub noiseless: bool,
}

#[derive(Args, Debug)]
pub struct ChannelCmd {
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// Total acquisition time ΔT in seconds.
    #[arg(long, default_value_t = qchan_core::experiment::DEFAULT_TOTAL_TIME, allow_negative_numbers = true)]
    pub dt: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SweepCmd {
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Number of evenly spaced λ values on [0, 1].
    #[arg(long, default_value_t = 101)]
    pub steps: usize,
    #[arg(long, default_value_t = qchan_core::experiment::DEFAULT_TOTAL_TIME, allow_negative_numbers = true)]
    pub dt: f64,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct TomoCmd {
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[arg(long, default_value_t = qchan_core::experiment::DEFAULT_TOTAL_TIME, allow_negative_numbers = true)]
    pub dt: f64,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Dp,
    Gad,
    Ad,
    Dephasing,
    Trig,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodArg {
    Linear,
    Mle,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Run(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Run(m) => write!(f, "error: {m}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Channel(c) => commands::channel(&c),
        Command::Decompose(c) => commands::decompose(&c),
        Command::Sweep(c) => commands::sweep(&c),
        Command::Tomo(c) => commands::tomo(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
