use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use llpx_core::eval::DEFAULT_FRACTIONS;
use llpx_core::{Delta, HyperParams, KernelSpec, Method, ScalingConfig};

/// Transfer learning from label proportions with bounded input uncertainty.
///
/// Every flag of a subcommand (except --config) can also be given as a key of
/// the JSON object passed with --config; the key is the flag name with
/// dashes replaced by underscores. Flags on the command line win.
#[derive(Debug, Parser)]
#[command(name = "llpx", version, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate two related synthetic tasks as sparse text files.
    Gen(GenArgs),
    /// Cut a labeled sparse file into bags and export the assignment CSV.
    Bag(BagArgs),
    /// Train a model and write it as JSON.
    Train(TrainArgs),
    /// Predict target-task labels, one per input line.
    Predict(PredictArgs),
    /// K-fold cross-validation on the target task.
    Cv(CvArgs),
    /// Noise-sensitivity sweep over corruption fractions.
    Sweep(SweepArgs),
    /// Per-round runtime at increasing problem sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON object of flag values (keys are flag names with underscores).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel folds and sweep cells.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelFamily {
    Linear,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskName {
    Source,
    Target,
}

impl TaskName {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::Source => "source",
            TaskName::Target => "target",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    TlLlp,
    TlLlpDelta0,
    SingleTask,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::TlLlp => Method::TlLlp,
            MethodArg::TlLlpDelta0 => Method::TlLlpDelta0,
            MethodArg::SingleTask => Method::SingleTask,
        }
    }
}

/// Hyperparameters; unset values keep the library defaults.
#[derive(Debug, Args)]
pub struct HpArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub c_source: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c_target: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_source: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_target: Option<f64>,
    /// Tube half-width shared by all bags.
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Perturbation bound of every instance.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Relative change of the dual objective that ends the alternation.
    #[arg(long, allow_negative_numbers = true)]
    pub stop_epsilon: Option<f64>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub qp_tol: Option<f64>,
    #[arg(long)]
    pub qp_max_iter: Option<u64>,
    /// Proportions are clipped to [clip, 1 - clip] before inversion.
    #[arg(long, allow_negative_numbers = true)]
    pub clip_epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelFamily>,
    /// Gaussian kernel width (default 1).
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
}

impl HpArgs {
    pub fn resolve(&self) -> anyhow::Result<HyperParams> {
        let mut hp = HyperParams::default();
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { hp.$f = v; })*};
        }
        set!(c_source, c_target, lambda_source, lambda_target, eps, stop_epsilon, max_rounds, qp_tol, qp_max_iter);
        if let Some(d) = self.delta {
            hp.delta = Delta::Scalar(d);
        }
        if let Some(c) = self.clip_epsilon {
            hp.scaling = ScalingConfig::new(c)?;
        }
        hp.kernel = match (self.kernel, self.gamma) {
            (Some(KernelFamily::Gaussian), g) => KernelSpec::Gaussian { gamma: g.unwrap_or(1.0) },
            (_, Some(_)) if self.kernel != Some(KernelFamily::Gaussian) => {
                return Err(crate::UsageError("--gamma needs --kernel gaussian".into()).into())
            }
            _ => KernelSpec::Linear,
        };
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 2000)]
    pub n_source: usize,
    #[arg(long, default_value_t = 400)]
    pub n_target: usize,
    #[arg(long, default_value_t = 20)]
    pub dims: usize,
    /// Translation of the target task along the second axis.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub mean_shift: f64,
    /// Distance between the class means along the first axis.
    #[arg(long, default_value_t = 3.0)]
    pub class_sep: f64,
    #[arg(long, env = "LLPX_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_source: PathBuf,
    #[arg(long)]
    pub out_target: PathBuf,
}

#[derive(Debug, Args)]
pub struct BagArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub bag_size: usize,
    #[arg(long, value_enum, default_value_t = TaskName::Target)]
    pub task: TaskName,
    #[arg(long, env = "LLPX_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Where a task's instances and bags come from.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Labeled sparse file of the source task; omit for single-task training.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Labeled sparse file of the target task.
    #[arg(long)]
    pub target: PathBuf,
    /// Bag assignment CSV for the source task (synthesized when absent).
    #[arg(long)]
    pub source_bags: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub bag_size: usize,
    #[arg(long, env = "LLPX_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Bag assignment CSV for the target task (synthesized when absent).
    #[arg(long)]
    pub target_bags: Option<PathBuf>,
    #[command(flatten)]
    pub hp: HpArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    /// Sparse file; labels, if present, are ignored.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Name written into the dataset column (default: target file stem).
    #[arg(long)]
    pub dataset: Option<String>,
    /// Fill the seconds column; makes report bodies run-dependent.
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::TlLlp)]
    pub method: MethodArg,
    #[command(flatten)]
    pub hp: HpArgs,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FRACTIONS.to_vec())]
    pub fractions: Vec<f64>,
    /// Repetition seeds (default: --seed alone).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![MethodArg::TlLlp, MethodArg::TlLlpDelta0, MethodArg::SingleTask])]
    pub methods: Vec<MethodArg>,
    #[command(flatten)]
    pub hp: HpArgs,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Instances per task at each step.
    #[arg(long, value_delimiter = ',', default_values_t = vec![250, 500, 1000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub bag_size: usize,
    #[arg(long, default_value_t = 20)]
    pub dims: usize,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 2.0)]
    pub class_sep: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub mean_shift: f64,
    #[arg(long, env = "LLPX_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub hp: HpArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}
