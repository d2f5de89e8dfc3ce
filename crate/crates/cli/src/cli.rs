use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "scorefuse",
    version,
    about = "Score-level fusion and verification metrics for biometric matchers",
    after_help = "Exit codes: 0 ok, 1 other failure, 2 usage, 3 parse, 4 contract, \
                  5 alignment, 6 leakage, 7 I/O."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score comparison pairs from embeddings.
    Score(ScoreArgs),
    /// Fuse aligned score files into one score file.
    Fuse(FuseArgs),
    /// Compute verification metrics and curves for one score file.
    Eval(EvalArgs),
    /// Run an experiment grid described by a config file.
    Grid(GridArgs),
    /// Pearson correlation between matchers' scores.
    Correlate(CorrelateArgs),
    /// Generate synthetic score files.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    /// 1 / (euclidean distance + 1), in (0, 1].
    Euclidean,
    /// Cosine similarity, in [-1, 1].
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizeArg {
    /// Keep raw scores.
    None,
    /// Map the metric's range affinely onto [0, 1].
    Unit,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// JSON-lines embeddings with entity_id, role (reference|probe) and vector.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// CSV of comparisons: probe_id,reference_id,probe_subject,reference_subject,mated,camera_id,distance_m,dataset_id.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, value_enum)]
    pub metric: MetricArg,
    /// Matcher label written to the output.
    #[arg(long)]
    pub matcher_id: String,
    /// Score normalization. Fusion expects scores in [0, 1].
    #[arg(long, value_enum, default_value_t = NormalizeArg::None)]
    pub normalize: NormalizeArg,
    /// Recorded in the output; scoring itself uses no randomness.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FuseMethodArg {
    Avg,
    Bayes,
    #[value(name = "pcc_avg")]
    PccAvg,
    Weighted,
    Perceptron,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Score files to fuse, one matcher each. Repeat the flag per file.
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub method: FuseMethodArg,
    /// Validation score files for fitting pcc_avg or perceptron; same matchers as --scores.
    #[arg(long = "validation")]
    pub validation: Vec<PathBuf>,
    /// Previously fitted weights or perceptron JSON, instead of fitting.
    #[arg(long, conflicts_with = "validation")]
    pub params: Option<PathBuf>,
    /// Comma-separated weights for --method weighted, in --scores order.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<f64>,
    /// Clamp used by the Bayesian rule before forming odds.
    #[arg(long, default_value_t = scorefuse::fusion::DEFAULT_BAYES_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_epochs: u32,
    /// Matcher label of the fused output; defaults to the method name.
    #[arg(long)]
    pub method_id: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write fitted parameters; defaults to <out>.params.json.
    #[arg(long)]
    pub params_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Declared score range as lo,hi.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.0, 1.0])]
    pub range: Vec<f64>,
    /// Directory for report.json, curves.csv and roc.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Decimals for percentages in the printed table and report display fields.
    #[arg(long, default_value_t = 2)]
    pub precision: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Record failing cells and continue instead of aborting.
    #[arg(long)]
    pub keep_going: bool,
    /// Override the config's output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Score files, one matcher each. Repeat the flag per file.
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub command: SynthCommand,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Class-conditional Gaussian scores for one matcher.
    Gaussian(GaussianArgs),
    /// Two matchers sharing an identity signal with independent noise.
    Complementary(ComplementaryArgs),
    /// Multi-matcher, two-camera, two-distance panel plus a grid config.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct GaussianArgs {
    /// JSON model file; flags given alongside override its fields.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub mu_nonmated: Option<f64>,
    #[arg(long)]
    pub sigma_nonmated: Option<f64>,
    #[arg(long)]
    pub mu_mated: Option<f64>,
    #[arg(long)]
    pub sigma_mated: Option<f64>,
    #[arg(long)]
    pub n_mated: Option<usize>,
    #[arg(long)]
    pub n_nonmated: Option<usize>,
    /// Clamp samples to [0, 1].
    #[arg(long)]
    pub clamp: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub matcher_id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComplementaryArgs {
    /// Latent class separation d.
    #[arg(long)]
    pub separation: f64,
    /// Comparisons per class.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes m1.csv and m2.csv here.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Writes scores/ and experiment.json here.
    #[arg(long)]
    pub out_dir: PathBuf,
}
