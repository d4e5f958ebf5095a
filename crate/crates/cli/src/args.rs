use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "doa", version, about = "Direction-of-arrival simulation, TransDOA training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a labeled SCM dataset.
    Gen(GenArgs),
    /// Train a TransDOA model on ideal data.
    Train(TrainArgs),
    /// Calibrate a trained model to an imperfect array.
    Transfer(TransferArgs),
    /// Evaluate TransDOA or MUSIC and write a metrics report.
    Eval(EvalArgs),
    /// Print the resolved run configuration as JSON.
    Config(ConfigArgs),
}

/// Scenario selection and overrides shared by several commands.
#[derive(Args, Debug, Clone, Default)]
pub struct ScenarioArgs {
    /// Preset name: scen1, scen2, scen3, scen4 or scen1-desk.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Run configuration JSON (as printed by `doa config`); overrides --scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Imperfection strength in [0, 1].
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub snapshots: Option<usize>,
    /// Active imperfections, comma separated from pos,gain,phase,mc.
    #[arg(long)]
    pub flags: Option<String>,
    /// Adjacent coupling coefficient as "re,im".
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    /// Zero the coupling matrix diagonal.
    #[arg(long)]
    pub mc_zero_diag: bool,
    /// DOA sampling: uniform or equidistant.
    #[arg(long)]
    pub doa: Option<String>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Optimizer overrides.
#[derive(Args, Debug, Clone, Default)]
pub struct OptimArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransferMode {
    Transfer,
    Finetune,
    Direct,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadArg {
    Reuse,
    Finetune,
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    /// Source checkpoint (ignored by --mode direct).
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target_data: PathBuf,
    /// Use the first N target records.
    #[arg(long)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = TransferMode::Transfer)]
    pub mode: TransferMode,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Mini-batches per alignment epoch.
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    /// Seed for the ideal counterparts; defaults to the target data's
    /// generation seed so both SCMs share signal and noise draws.
    #[arg(long)]
    pub pair_seed: Option<u64>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Transdoa,
    Music,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    /// Per-trial CSV output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Generate data at SNRs lo:hi:step and write one report per SNR.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_sweep: Option<String>,
    /// Trials per SNR in sweep mode.
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    /// Re-run the evaluation recorded in an earlier report's config sidecar.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
