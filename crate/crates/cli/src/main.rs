//! `irmkit` command-line frontend.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 numeric failure
//! (divergence or a singular system). Errors are reported on stderr as
//! `{"error":{"kind":...,"message":...}}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use irmkit::dataset::Organism;
use irmkit::harness::{
    build_augmentation_plan, build_fixed_total_plan, build_substitution_plan, run_sweep_with_workers, SweepReport,
};
use irmkit::model::{LinearModel, LossKind, TraceEntry, TrainConfig};
use irmkit::preprocess::{load_expression_table, load_homologue_map, preprocess, TableSource, DEFAULT_LABEL_COLUMN};
use irmkit::ranking::{rank_features, Metric, RankedFeatureList};
use irmkit::report::write_heatmaps;
use irmkit::scm::{generate_scm_dataset, generate_test_environment, ScmSpec};
use irmkit::store::{read_dataset, read_json, write_dataset, write_json};
use irmkit::{Error, ErrorKind};

/// Trace entries kept in the model file.
const TRACE_TAIL: usize = 20;

#[derive(Parser)]
#[command(
    name = "irmkit",
    version,
    about = "Invariant risk minimization for multi-environment tabular data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-environment dataset from an SCM spec.
    Synth(SynthArgs),
    /// Map, merge, filter and normalize expression tables into a dataset.
    Preprocess(PreprocessArgs),
    /// Train a linear IRM (or, with --lambda 0, ERM) model.
    Train(TrainArgs),
    /// Rank a trained model's features by absolute weight.
    Rank(RankArgs),
    /// Print the similarity metrics between two rankings as JSON.
    Compare(CompareArgs),
    /// Run an augmentation, substitution or fixed-total sweep.
    Sweep(SweepArgs),
    /// Convert a sweep report into heatmap CSVs (and optionally SVGs).
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// SCM spec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write the held-out test environment to this directory.
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Human expression table (CSV); repeatable.
    #[arg(long)]
    human: Vec<PathBuf>,
    /// Mouse expression table (CSV); repeatable.
    #[arg(long)]
    mouse: Vec<PathBuf>,
    /// Mouse-to-human homologue map (TSV).
    #[arg(long)]
    homologues: Option<PathBuf>,
    /// Number of highest-variance genes to keep.
    #[arg(long, default_value_t = 1000)]
    top_genes: usize,
    /// Name of the 0/1 label column.
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    label_column: String,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainFlags {
    /// Training config JSON; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Final penalty weight (0 trains plain ERM).
    #[arg(long)]
    lambda: Option<f64>,
    /// Iterations trained with the penalty weight capped at 1.
    #[arg(long)]
    anneal: Option<usize>,
    /// Total gradient-descent iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// L2 weight on θ.
    #[arg(long)]
    l2: Option<f64>,
    /// Standard deviation of the initial θ.
    #[arg(long)]
    init_scale: Option<f64>,
    /// Loss: logistic or squared.
    #[arg(long)]
    loss: Option<LossKind>,
}

impl TrainFlags {
    fn resolve(&self) -> Result<TrainConfig, Error> {
        let mut config = match &self.config {
            Some(path) => read_json(&input(path)?)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.lambda {
            config.lambda_final = v;
        }
        if let Some(v) = self.anneal {
            config.anneal_iters = v;
        }
        if let Some(v) = self.iters {
            config.total_iters = v;
        }
        if let Some(v) = self.lr {
            config.learning_rate = v;
        }
        if let Some(v) = self.l2 {
            config.l2_weight = v;
        }
        if let Some(v) = self.init_scale {
            config.init_scale = v;
        }
        if let Some(v) = self.loss {
            config.loss_kind = v;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Random seed for the initial weights.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct RankArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Output ranking JSON.
    #[arg(long)]
    out: PathBuf,
    /// Source label stored in the ranking (defaults to the model file name).
    #[arg(long)]
    source: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// First ranking JSON.
    a: PathBuf,
    /// Second ranking JSON.
    b: PathBuf,
    /// RBO persistence.
    #[arg(long, default_value_t = irmkit::harness::DEFAULT_RBO_P)]
    rbo_p: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Augment,
    Substitute,
    FixedTotal,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep mode.
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Samples added or swapped per environment between cells.
    #[arg(long)]
    step: usize,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    /// Comma-separated metrics: top10, top50, rbo, tau.
    #[arg(long, value_delimiter = ',', default_value = "top10,top50,rbo,tau")]
    metrics: Vec<Metric>,
    /// RBO persistence.
    #[arg(long, default_value_t = irmkit::harness::DEFAULT_RBO_P)]
    rbo_p: f64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Total samples per cell (fixed-total mode only).
    #[arg(long)]
    budget: Option<usize>,
    /// Output report JSON.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep report JSON.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for the heatmaps.
    #[arg(long)]
    out: PathBuf,
    /// Also write SVG heatmaps.
    #[arg(long)]
    svg: bool,
}

/// Model file written by `train` and read by `rank`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    gene_ids: Vec<String>,
    theta: Vec<f64>,
    bias: f64,
    w0: f64,
    final_objective: f64,
    config: TrainConfig,
    trace_tail: Vec<TraceEntry>,
}

#[derive(Serialize)]
struct PreprocessReport {
    inputs: Vec<InputTable>,
    homologues: Option<PathBuf>,
    top_genes: usize,
    intersection_size: usize,
    dropped_genes: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct InputTable {
    experiment_id: String,
    organism: Organism,
    path: PathBuf,
}

fn input(path: &Path) -> Result<PathBuf, Error> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::Invalid(format!("input `{}` does not exist", path.display())))
    }
}

fn synth(args: &SynthArgs) -> Result<(), Error> {
    let spec: ScmSpec = read_json(&input(&args.spec)?)?;
    spec.validate()?;
    let data = generate_scm_dataset(&spec, args.seed)?;
    write_dataset(&args.out, &data)?;
    if let Some(dir) = &args.test_out {
        write_dataset(dir, &generate_test_environment(&spec, args.seed)?)?;
    }
    Ok(())
}

fn experiment_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn run_preprocess(args: &PreprocessArgs) -> Result<(), Error> {
    let mut inputs = Vec::new();
    for (paths, organism) in [(&args.human, Organism::Human), (&args.mouse, Organism::Mouse)] {
        for path in paths {
            inputs.push(InputTable {
                experiment_id: experiment_id(path),
                organism,
                path: input(path)?,
            });
        }
    }
    if inputs.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 input tables, got {}",
            inputs.len()
        )));
    }
    if !args.mouse.is_empty() && args.homologues.is_none() {
        return Err(Error::Invalid("mouse tables need --homologues".into()));
    }
    let map = args
        .homologues
        .as_deref()
        .map(|p| load_homologue_map(&input(p)?))
        .transpose()?;
    let tables = inputs
        .iter()
        .map(|t| {
            let source = TableSource {
                label_column: args.label_column.clone(),
                ..TableSource::new(&t.experiment_id, t.organism)
            };
            load_expression_table(&t.path, &source)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (data, summary) = preprocess(&tables, map.as_ref(), args.top_genes)?;
    write_dataset(&args.out, &data)?;
    let report = PreprocessReport {
        inputs,
        homologues: args.homologues.clone(),
        top_genes: args.top_genes,
        intersection_size: summary.intersection_size,
        dropped_genes: summary.dropped_genes,
    };
    write_json(&args.out.join("preprocess.json"), &report)
}

fn run_train(args: &TrainArgs) -> Result<(), Error> {
    let mut config = args.train.resolve()?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let data = read_dataset(&input(&args.data)?)?;
    let trained = irmkit::train(&data, &config)?;
    let skip = trained.trace.len().saturating_sub(TRACE_TAIL);
    let file = ModelFile {
        gene_ids: data.gene_ids,
        theta: trained.model.theta,
        bias: trained.model.bias,
        w0: trained.model.w0,
        final_objective: trained.final_objective,
        config: trained.config,
        trace_tail: trained.trace[skip..].to_vec(),
    };
    write_json(&args.out, &file)
}

fn run_rank(args: &RankArgs) -> Result<(), Error> {
    let path = input(&args.model)?;
    let file: ModelFile = read_json(&path)?;
    let model = LinearModel::new(file.theta, file.bias, file.w0)?;
    let source = args.source.clone().unwrap_or_else(|| experiment_id(&path));
    write_json(&args.out, &rank_features(&model, &file.gene_ids, source)?)
}

fn load_ranking(path: &Path) -> Result<RankedFeatureList, Error> {
    let list: RankedFeatureList = read_json(&input(path)?)?;
    list.validate()?;
    Ok(list)
}

fn compare(args: &CompareArgs) -> Result<(), Error> {
    let a = load_ranking(&args.a)?;
    let b = load_ranking(&args.b)?;
    if !(args.rbo_p > 0.0 && args.rbo_p < 1.0) {
        return Err(Error::Invalid(format!(
            "--rbo-p must lie in (0, 1), got {}",
            args.rbo_p
        )));
    }
    let mut out = serde_json::Map::new();
    for metric in Metric::ALL {
        // Metrics that do not apply to these lists (too short) print as null.
        let value = metric.evaluate(&a, &b, args.rbo_p).ok();
        out.insert(metric.name().to_string(), serde_json::json!(value));
    }
    println!("{}", serde_json::Value::Object(out));
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Error> {
    let config = args.train.resolve()?;
    let data = read_dataset(&input(&args.data)?)?;
    if args.workers == 0 {
        return Err(Error::Invalid("--workers must be at least 1".into()));
    }
    if args.budget.is_some() && !matches!(args.mode, ModeArg::FixedTotal) {
        return Err(Error::Invalid("--budget only applies to --mode fixed-total".into()));
    }
    let mut plan = match args.mode {
        ModeArg::Augment => build_augmentation_plan(&data, args.step, &args.seeds, &config)?,
        ModeArg::Substitute => build_substitution_plan(&data, args.step, &args.seeds, &config)?,
        ModeArg::FixedTotal => {
            let budget = args
                .budget
                .ok_or_else(|| Error::Invalid("--mode fixed-total needs --budget".into()))?;
            build_fixed_total_plan(&data, budget, args.step, &args.seeds, &config)?
        }
    };
    plan.metrics = args.metrics.clone();
    plan.rbo_p = args.rbo_p;
    plan.validate(&data)?;
    let report = run_sweep_with_workers(&data, &plan, args.workers)?;
    write_json(&args.out, &report)
}

fn report(args: &ReportArgs) -> Result<(), Error> {
    let report: SweepReport = read_json(&input(&args.input)?)?;
    write_heatmaps(&report, &args.out, args.svg)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => run_preprocess(a),
        Command::Train(a) => run_train(a),
        Command::Rank(a) => run_rank(a),
        Command::Compare(a) => compare(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = match e.kind() {
                ErrorKind::Io => ("io", 1),
                ErrorKind::Validation => ("validation", 2),
                ErrorKind::Numeric => ("numeric", 3),
            };
            let body = serde_json::json!({ "error": { "kind": kind, "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
