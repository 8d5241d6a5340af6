mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use classvec::{Aggregation, Metric, NormScope, NormStage};

pub const THREADS_ENV: &str = "CLASSVEC_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "classvec",
    version,
    about = "Image-class embeddings from sparse layer activations",
    after_help = "Set CLASSVEC_THREADS to bound the worker thread count. Every run writes run.json to its output directory."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Write a seeded synthetic dataset with a planted taxonomy signal
    Generate(GenerateArgs),
    /// Aggregate image activations into class embeddings and a distance matrix
    Build(BuildArgs),
    /// Spearman correlation of class distances against taxonomy measures
    Eval(EvalArgs),
    /// Mean correlation when only some layer groups are used
    Sweep(SweepArgs),
    /// Classical multidimensional scaling of a distance matrix
    Mds(MdsArgs),
    /// ISOMAP embedding of a distance matrix
    Isomap(IsomapArgs),
    /// Solve an image equation such as `A - B` or `C - (A - B)`
    Solve(SolveArgs),
    /// Repeat a recorded run and check that its outputs are unchanged
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub classes: usize,
    #[arg(long, default_value_t = 11)]
    pub images_min: usize,
    #[arg(long, default_value_t = 32)]
    pub images_max: usize,
    #[arg(long, default_value_t = 1024)]
    pub layer_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub block_size: usize,
    #[arg(long, default_value_t = 4)]
    pub max_branching: usize,
    #[arg(long)]
    pub root_branching: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Signal weight for one layer group, e.g. `5a=0` (repeatable)
    #[arg(long = "group-weight", value_name = "GROUP=WEIGHT")]
    pub group_weights: Vec<String>,
    /// Random background features per image and layer
    #[arg(long, default_value_t = 0)]
    pub background: usize,
    #[arg(long, default_value_t = 1.0)]
    pub background_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub composites: usize,
    #[arg(long, default_value_t = 0)]
    pub attributes: usize,
    #[arg(long, default_value_t = 0)]
    pub twins_per_attribute: usize,
    /// Corpus names for generated count files (repeatable; default brown and bnc)
    #[arg(long = "corpus", value_name = "NAME")]
    pub corpora: Vec<String>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PipelineArgs {
    /// arithmetic, geometric or harmonic
    #[arg(long, default_value_t = Aggregation::Arithmetic)]
    pub agg: Aggregation,
    /// layer, whole or none
    #[arg(long, default_value_t = NormScope::Layer)]
    pub norm: NormScope,
    /// image, class or none [default: class, or none with --norm none]
    #[arg(long)]
    pub norm_stage: Option<NormStage>,
    /// Drop activations below this value before aggregation
    #[arg(long)]
    pub threshold: Option<f64>,
    /// cosine or euclidean
    #[arg(long, default_value_t = Metric::Cosine)]
    pub metric: Metric,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ActivationInputs {
    /// Layer manifest (layer_id, group, dim per line)
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub activations: PathBuf,
    #[arg(long)]
    pub class_map: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BuildArgs {
    #[command(flatten)]
    pub inputs: ActivationInputs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Keep only these layer groups, comma separated (e.g. `5a,5b`)
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyInputs {
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Corpus counts as NAME=FILE or FILE (named after the file stem); repeatable
    #[arg(long = "counts", value_name = "[NAME=]FILE")]
    pub counts: Vec<String>,
    /// path, lch, wup, res, jcn, lin or all
    #[arg(long, default_value = "all")]
    pub measure: String,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Distance matrix CSV written by `build`
    #[arg(long)]
    pub distances: PathBuf,
    #[arg(long)]
    pub class_map: PathBuf,
    #[command(flatten)]
    pub taxonomy: TaxonomyInputs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub inputs: ActivationInputs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub taxonomy: TaxonomyInputs,
    /// Group subset as NAME=G1,G2,...; repeatable [default: all, top, middle, bottom]
    #[arg(long = "subset", value_name = "NAME=GROUPS")]
    pub subsets: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MapArgs {
    #[arg(long)]
    pub distances: PathBuf,
    /// File with one class id per line, drawn in a common shade; repeatable
    #[arg(long = "highlight", value_name = "FILE")]
    pub highlights: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MdsArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct IsomapArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, default_value_t = 3)]
    pub dims: usize,
    #[arg(long, default_value_t = classvec::manifold::DEFAULT_K_NEIGHBORS)]
    pub k_neighbors: usize,
    /// Embed only the largest connected component of a disconnected graph
    #[arg(long)]
    pub largest_component: bool,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SolveArgs {
    /// `A - B` or `C - (A - B)` with class or synset ids
    pub query: String,
    /// Embeddings file written by `build`
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = classvec::equation::DEFAULT_TOP_K)]
    pub top: usize,
    /// Allow the equation's operands to appear in the results
    #[arg(long)]
    pub keep_operands: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RerunArgs {
    /// run.json written by an earlier invocation
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Invalid flag values or combinations; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .parse()
            .map_err(|_| usage(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
        if n == 0 {
            return Err(usage(format!("{THREADS_ENV} must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Rerun(args) => run::rerun(&args),
        command => run::execute(command, None).map(|_| ()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
