//! The `gtcurate` command line: every pipeline stage as a subcommand.
//!
//! Exit status is 0 on success, 1 on a runtime error and 2 on a usage error.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod campaign;
pub mod config;
pub mod evaluate;
pub mod pipeline;

pub use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "gtcurate", version, about = "Curate ground truth for realistic image super-resolution")]
pub struct Cli {
    /// Shared pipeline configuration (TOML). Flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Degrade HR images with seeded recipes drawn from a severity profile.
    Degrade(DegradeArgs),
    /// Cut aligned patch groups from originals and four enhanced versions.
    MakeGroups(MakeGroupsArgs),
    /// Serve the annotation HTTP API for a campaign.
    ServeAnnotation(ServeArgs),
    /// Run a campaign with scripted annotators and write the record log.
    SimulateCampaign(SimulateArgs),
    /// Count annotations and majority-vote finals; write report tables.
    Aggregate(AggregateArgs),
    /// Export LR/GT training pairs from labeled groups.
    ExportPairs(ExportArgs),
    /// Sample a multi-GT test set from groups with enough positive finals.
    BuildTestset(TestsetArgs),
    /// Compute residual maps and the loss breakdown for one set of images.
    LossCheck(LossCheckArgs),
    /// Score SR outputs against every positive GT of each test item.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// Built-in profile name or path to a profile TOML.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// SR factor; 1 keeps the original size (degrade, then upsample back).
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    #[arg(long = "in", value_name = "DIR")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct MakeGroupsArgs {
    #[arg(long, value_name = "DIR")]
    pub orig: Option<PathBuf>,
    /// The four enhanced directories, in model order.
    #[arg(long, value_name = "DIR", num_args = 4)]
    pub enhanced: Option<Vec<PathBuf>>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub size: Option<usize>,
    /// Patch proposals per image.
    #[arg(long)]
    pub want: Option<usize>,
    #[arg(long)]
    pub max_overlap: Option<f64>,
    #[arg(long)]
    pub pyramid_levels: Option<usize>,
    #[arg(long)]
    pub min_std_image: Option<f64>,
    #[arg(long)]
    pub min_std_highfreq: Option<f64>,
    #[arg(long)]
    pub min_diff: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Campaign config (TOML).
    #[arg(long = "campaign", value_name = "FILE")]
    pub campaign: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Append-only record log; reopened and replayed on restart.
    #[arg(long, value_name = "FILE")]
    pub log: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LabelPolicy {
    /// Every label Positive.
    AllPositive,
    /// Each label drawn uniformly.
    Uniform,
    /// Per-model label frequencies of a large reference campaign.
    Reference,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of synthetic groups.
    #[arg(long, conflicts_with = "groups_manifest")]
    pub groups: Option<usize>,
    /// Use the groups of an existing manifest instead.
    #[arg(long, value_name = "FILE")]
    pub groups_manifest: Option<PathBuf>,
    #[arg(long)]
    pub annotators: Option<usize>,
    #[arg(long)]
    pub per_group: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = LabelPolicy::Reference)]
    pub policy: LabelPolicy,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long, value_name = "FILE")]
    pub records: PathBuf,
    /// Group manifest; groups without complete labels are reported.
    #[arg(long, value_name = "FILE")]
    pub groups: Option<PathBuf>,
    /// JSONL report; a text rendering is written next to it with a `.txt` extension.
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
    /// Also write the per-variant final labels.
    #[arg(long, value_name = "FILE")]
    pub finals: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExportModeArg {
    Pos,
    Posneg,
}

#[derive(Debug, Args)]
pub struct LrArgs {
    /// Group manifest from make-groups.
    #[arg(long, value_name = "FILE")]
    pub groups: PathBuf,
    /// Record log from the campaign.
    #[arg(long, value_name = "FILE")]
    pub records: PathBuf,
    /// Profile for the LR degradation.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// SR factor between HR patches and LR inputs.
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// Where LR images go; defaults to `lr/` next to the output manifest.
    #[arg(long, value_name = "DIR")]
    pub lr_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub lr: LrArgs,
    #[arg(long, value_enum, default_value_t = ExportModeArg::Posneg)]
    pub mode: ExportModeArg,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TestsetArgs {
    #[command(flatten)]
    pub lr: LrArgs,
    #[arg(long, default_value_t = 2)]
    pub min_positive: usize,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LossCheckArgs {
    #[arg(long, value_name = "PNG")]
    pub pos: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub neg: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub hr: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub sr: PathBuf,
    /// Exponent applied to the local variance.
    #[arg(long)]
    pub a: Option<f64>,
    /// `alpha,beta,gamma,delta`
    #[arg(long)]
    pub weights: Option<String>,
    /// Externally computed perceptual term.
    #[arg(long, default_value_t = 0.0)]
    pub perceptual: f64,
    /// Externally computed adversarial term.
    #[arg(long, default_value_t = 0.0)]
    pub adversarial: f64,
    /// Directory for the map PNGs and `loss.json`.
    #[arg(long, value_name = "DIR")]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub testset: PathBuf,
    /// Directory with one `{item_id}.png` per test item.
    #[arg(long, value_name = "DIR")]
    pub sr: PathBuf,
    /// Comma-separated: psnr, psnr-y, ssim, or `name=program` for an external scorer.
    #[arg(long, default_value = "psnr,ssim")]
    pub metrics: String,
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Degrade(a) => pipeline::degrade_cmd(&a, &cfg),
        Command::MakeGroups(a) => pipeline::make_groups_cmd(&a, &cfg),
        Command::ServeAnnotation(a) => campaign::serve_cmd(&a),
        Command::SimulateCampaign(a) => campaign::simulate_cmd(&a, &cfg),
        Command::Aggregate(a) => campaign::aggregate_cmd(&a),
        Command::ExportPairs(a) => pipeline::export_pairs_cmd(&a, &cfg),
        Command::BuildTestset(a) => pipeline::build_testset_cmd(&a, &cfg),
        Command::LossCheck(a) => evaluate::loss_check_cmd(&a, &cfg),
        Command::Eval(a) => evaluate::eval_cmd(&a),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
