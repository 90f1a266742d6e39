mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ufcnn::Error;

#[derive(Debug, Parser)]
#[command(name = "ufcnn", version, about = "Causal multiresolution convolutional networks for time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate bearing-only tracking sequences.
    GenTracking(GenTrackingArgs),
    /// Generate synthetic best-quote series.
    SynthQuotes(SynthQuotesArgs),
    /// Label tick files with profit-maximizing actions.
    LabelTrades(LabelArgs),
    /// Train a network and write a checkpoint plus metric history.
    Train(TrainArgs),
    /// Print the validation metric of a checkpoint.
    Eval(EvalArgs),
    /// Run every finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Compare model, optimal and uniform strategies on tick data.
    Backtest(BacktestArgs),
    /// Train the tracking grid over levels and filter counts.
    Ablation(AblationArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Tracking,
    Trading,
    Pianoroll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Ufcnn,
    Fcn,
    Both,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// TOML file with [train], [network], [tracking] and [trading] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Reduced data and iteration counts that finish on a desktop.
    #[arg(long)]
    pub desk_scale: bool,
}

#[derive(Debug, Args)]
pub struct NetArgs {
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub kernel_len: Option<usize>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
}

#[derive(Debug, Args)]
pub struct MarketArgs {
    #[arg(long)]
    pub cost_per_trade: Option<f64>,
    #[arg(long)]
    pub max_position: Option<i64>,
}

#[derive(Debug, Args)]
pub struct GenTrackingArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SynthQuotesArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub market: MarketArgs,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub market: MarketArgs,
    /// Tick CSV files to label.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub market: MarketArgs,
    #[arg(long, value_enum, default_value = "tracking")]
    pub task: Task,
    /// Existing data directory; tracking and trading data are generated when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub market: MarketArgs,
    #[arg(long, value_enum, default_value = "tracking")]
    pub task: Task,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Feature normalization written by `train --task trading`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value = "val")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub market: MarketArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Directory of `test_*.csv` tick files; synthetic test quotes when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated level counts.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    /// Comma-separated filter counts.
    #[arg(long, value_delimiter = ',')]
    pub filters: Option<Vec<usize>>,
    #[arg(long)]
    pub kernel_len: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    pub variant: VariantArg,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::GenTracking(a) => commands::gen_tracking(a),
        Command::SynthQuotes(a) => commands::synth_quotes(a),
        Command::LabelTrades(a) => commands::label_trades(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Backtest(a) => commands::backtest(a),
        Command::Ablation(a) => commands::ablation(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
