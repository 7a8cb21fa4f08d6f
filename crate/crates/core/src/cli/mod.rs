//! `attentab` command line: preprocess, train, evaluate, explain, inspect.
//!
//! Settings come from built-in defaults, then an optional `--config` JSON
//! file, then command-line flags, each overriding the previous layer.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::{DataConfig, OutputConfig, RunConfig};

use crate::container;
use crate::data::{self, CsvOptions, EncodedDataset, Split};
use crate::error::{Error, Result};
use crate::tabnet::{RankingTable, TabNet};
use crate::train::{self, AlphaMode, F1Average, LossKind, TrainConfig};

pub const MODEL_FILE: &str = "model.attb";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Parser)]
#[command(name = "attentab", version, about = "TabNet classifier for tabular CSV data")]
pub struct Cli {
    /// Log progress (-v) or debug detail (-vv) to stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a schema on raw CSV input and write the encoded dataset.
    Preprocess(PreprocessArgs),
    /// Train a model on an encoded dataset.
    Train(TrainArgs),
    /// Report loss, accuracy and F1 of a model on a dataset partition.
    Evaluate(EvalArgs),
    /// Rank features by attention-mask importance.
    Explain(ExplainArgs),
    /// Summarize an encoded dataset.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Feature CSV.
    #[arg(long)]
    pub values: Option<PathBuf>,
    /// Label CSV, joined to the values on the id column.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out_schema: Option<PathBuf>,
    #[arg(long)]
    pub out_dataset: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub id_column: Option<String>,
    #[arg(long)]
    pub drop_threshold: Option<f64>,
    #[arg(long)]
    pub delimiter: Option<char>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Cce,
    Balanced,
    Focal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlphaArg {
    Auto,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AverageArg {
    Macro,
    Weighted,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Encoded dataset from `preprocess`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output directory for the model, history and metrics.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Focusing parameter of the focal loss.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub alpha: Option<AlphaArg>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Seeds initialization, shuffling and the validation split.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub n_d: Option<usize>,
    #[arg(long)]
    pub n_a: Option<usize>,
    #[arg(long)]
    pub gamma_relax: Option<f64>,
    #[arg(long)]
    pub lambda_sparse: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub f1_average: Option<AverageArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitArg {
    Train,
    Val,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Partition to score; train and val repeat the split used in training.
    #[arg(long, value_enum, default_value = "val")]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "val")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Also print the leading features of the first N instances.
    #[arg(long, default_value_t = 0)]
    pub instances: usize,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    let mut out = std::io::stdout().lock();
    match run(cli.command, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

pub fn run(command: Command, out: &mut impl std::io::Write) -> Result<()> {
    match command {
        Command::Preprocess(a) => preprocess(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Evaluate(a) => evaluate_cmd(a, out),
        Command::Explain(a) => explain_cmd(a, out),
        Command::Inspect(a) => inspect_cmd(a, out),
    }
}

fn write_out(out: &mut impl std::io::Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} given (flag or config file)")))
}

fn preprocess(a: PreprocessArgs, out: &mut impl std::io::Write) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    let d = &mut cfg.data;
    d.values = a.values.or(d.values.take());
    d.labels = a.labels.or(d.labels.take());
    d.dataset = a.out_dataset.or(d.dataset.take());
    d.schema_out = a.out_schema.or(d.schema_out.take());
    if let Some(t) = a.target {
        d.schema.target = t;
    }
    if let Some(id) = a.id_column {
        d.schema.id_columns = vec![id];
    }
    if let Some(t) = a.drop_threshold {
        d.schema.drop_threshold = t;
    }
    if let Some(c) = a.delimiter {
        d.delimiter = c;
    }
    cfg.validate()?;
    let d = &cfg.data;
    let values = require(&d.values, "values CSV")?;
    let dataset_path = require(&d.dataset, "output dataset path")?;
    let schema_path = require(&d.schema_out, "output schema path")?;
    let csv = CsvOptions { delimiter: d.delimiter as u8 };
    let table = match &d.labels {
        Some(labels) => {
            let id = d.schema.id_columns.first().map_or("id", String::as_str);
            data::load_joined(values, labels, id, &csv)?
        }
        None => data::load_csv(values, &csv)?,
    };
    let schema = data::fit_schema(&table, &d.schema)?;
    let dataset = data::encode(&table, &schema)?;
    container::write_atomic(schema_path, schema.to_json()?.as_bytes())?;
    dataset.save(dataset_path)?;
    write_out(out, &data::inspect(&dataset).to_string())
}

fn train_overrides(cfg: &mut RunConfig, a: &TrainArgs) {
    let (m, t) = (&mut cfg.model, &mut cfg.train);
    if let Some(v) = a.loss {
        t.loss = match v {
            LossArg::Cce => LossKind::Cce,
            LossArg::Balanced => LossKind::Balanced,
            LossArg::Focal => LossKind::Focal,
        };
    }
    if let Some(v) = a.alpha {
        t.alpha = match v {
            AlphaArg::Auto => AlphaMode::Auto,
            AlphaArg::Uniform => AlphaMode::Uniform,
        };
    }
    if let Some(v) = a.f1_average {
        t.f1_average = match v {
            AverageArg::Macro => F1Average::Macro,
            AverageArg::Weighted => F1Average::Weighted,
        };
    }
    if let Some(v) = a.gamma {
        t.gamma_focal = v;
    }
    if let Some(v) = a.max_epochs {
        t.max_epochs = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.patience {
        t.patience = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
        m.seed = v;
        cfg.data.split_seed = v;
    }
    if let Some(v) = a.n_steps {
        m.n_steps = v;
    }
    if let Some(v) = a.n_d {
        m.n_d = v;
    }
    if let Some(v) = a.n_a {
        m.n_a = v;
    }
    if let Some(v) = a.gamma_relax {
        m.gamma_relax = v;
    }
    if let Some(v) = a.lambda_sparse {
        m.lambda_sparse = v;
    }
    if let Some(v) = a.val_fraction {
        cfg.data.val_fraction = v;
    }
    if let Some(p) = &a.dataset {
        cfg.data.dataset = Some(p.clone());
    }
    if let Some(p) = &a.out_dir {
        cfg.output.dir = Some(p.clone());
    }
}

/// Run settings stored inside the model so later commands can rebuild the
/// split and the objective.
#[derive(Debug, Serialize, serde::Deserialize)]
struct RunMetadata {
    val_fraction: f64,
    split_seed: u64,
    train: TrainConfig,
    train_class_counts: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct FinalMetrics {
    best_epoch: usize,
    stopped_epoch: usize,
    early_stopped: bool,
    val_loss: f64,
    val_accuracy: f64,
    val_f1: f64,
    f1_average: F1Average,
}

fn train_cmd(a: TrainArgs, out: &mut impl std::io::Write) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    train_overrides(&mut cfg, &a);
    cfg.validate()?;
    let dataset = EncodedDataset::load(require(&cfg.data.dataset, "dataset path")?)?;
    let dir = require(&cfg.output.dir, "output directory")?.to_path_buf();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let split = data::stratified_split(&dataset.labels, dataset.n_classes(), cfg.data.val_fraction, cfg.data.split_seed)?;
    let mut model = TabNet::new(cfg.model.clone(), &dataset.schema)?;
    log::info!(
        "training on {} rows, validating on {}; {} parameters",
        split.train_indices.len(),
        split.val_indices.len(),
        model.store().total_values()
    );
    let report = train::fit(&mut model, &dataset, &split, &cfg.train)?;
    let mut counts = vec![0usize; dataset.n_classes()];
    split.train_indices.iter().for_each(|&i| counts[dataset.labels[i]] += 1);
    model.metadata = serde_json::to_value(RunMetadata {
        val_fraction: cfg.data.val_fraction,
        split_seed: cfg.data.split_seed,
        train: cfg.train.clone(),
        train_class_counts: counts,
    })?;

    let best = report.best();
    let metrics = FinalMetrics {
        best_epoch: report.best_epoch,
        stopped_epoch: report.stopped_epoch,
        early_stopped: report.early_stopped,
        val_loss: best.val_loss,
        val_accuracy: best.val_acc,
        val_f1: best.val_f1,
        f1_average: cfg.train.f1_average,
    };
    model.save(dir.join(MODEL_FILE))?;
    report.write_history(dir.join(HISTORY_FILE))?;
    let json = serde_json::to_string_pretty(&metrics)?;
    container::write_atomic(dir.join(METRICS_FILE), json.as_bytes())?;
    write_out(out, &format!("{json}\n"))
}

/// Loads a model and a dataset with the same schema.
fn load_pair(model: &Path, config: Option<&Path>, dataset: &Option<PathBuf>) -> Result<(TabNet, EncodedDataset)> {
    let cfg = RunConfig::load_or_default(config)?;
    let model = TabNet::load(model)?;
    let path = dataset.as_ref().or(cfg.data.dataset.as_ref());
    let dataset = EncodedDataset::load(require(&path.cloned(), "dataset path")?)?;
    if dataset.schema.fingerprint() != model.schema().fingerprint() {
        return Err(Error::Schema("dataset schema does not match the schema the model was trained on".into()));
    }
    Ok((model, dataset))
}

fn metadata(model: &TabNet) -> Result<RunMetadata> {
    serde_json::from_value(model.metadata.clone())
        .map_err(|e| Error::Format(format!("model lacks training metadata: {e}")))
}

fn partition(model: &TabNet, dataset: &EncodedDataset, which: SplitArg) -> Result<Vec<usize>> {
    if which == SplitArg::All {
        return Ok((0..dataset.n_rows()).collect());
    }
    let meta = metadata(model)?;
    let Split {
        train_indices,
        val_indices,
    } = data::stratified_split(&dataset.labels, dataset.n_classes(), meta.val_fraction, meta.split_seed)?;
    Ok(if which == SplitArg::Train { train_indices } else { val_indices })
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    split: SplitArg,
    rows: usize,
    loss: f64,
    accuracy: f64,
    f1: f64,
    f1_average: F1Average,
}

fn evaluate_cmd(a: EvalArgs, out: &mut impl std::io::Write) -> Result<()> {
    let (model, dataset) = load_pair(&a.model, a.config.as_deref(), &a.dataset)?;
    let meta = metadata(&model)?;
    let indices = partition(&model, &dataset, a.split)?;
    let loss = meta.train.loss_spec(&meta.train_class_counts)?;
    let m = train::evaluate(&model, &dataset, &indices, &loss, meta.train.f1_average)?;
    let json = serde_json::to_string_pretty(&EvalOutput {
        split: a.split,
        rows: indices.len(),
        loss: m.loss,
        accuracy: m.accuracy,
        f1: m.f1,
        f1_average: meta.train.f1_average,
    })?;
    write_out(out, &format!("{json}\n"))
}

fn explain_cmd(a: ExplainArgs, out: &mut impl std::io::Write) -> Result<()> {
    let (model, dataset) = load_pair(&a.model, a.config.as_deref(), &a.dataset)?;
    let indices = partition(&model, &dataset, a.split)?;
    let (x, _) = dataset.gather(&indices);
    let report = model.explain(&x, indices.len())?;
    let mut text = format!("top {} features over {} rows\n", a.top_k.min(report.feature_names.len()), indices.len());
    text += &RankingTable(&report.top_k(a.top_k)).to_string();
    if a.instances > 0 {
        text += "\ninstance  leading features\n";
        for (b, &row) in indices.iter().enumerate().take(a.instances) {
            let shares = report.instance_importance.row(b);
            let mut order: Vec<usize> = (0..shares.len()).collect();
            order.sort_by(|&i, &j| shares[j].total_cmp(&shares[i]));
            let lead: Vec<String> = order
                .iter()
                .take(3)
                .map(|&j| format!("{}={:.3}", report.feature_names[j], shares[j]))
                .collect();
            text += &format!("{row:>8}  {}\n", lead.join(" "));
        }
    }
    write_out(out, &text)
}

fn inspect_cmd(a: InspectArgs, out: &mut impl std::io::Write) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    let path = a.dataset.or(cfg.data.dataset);
    let dataset = EncodedDataset::load(require(&path, "dataset path")?)?;
    let report = data::inspect(&dataset);
    if a.json {
        write_out(out, &format!("{}\n", serde_json::to_string_pretty(&report)?))
    } else {
        write_out(out, &report.to_string())
    }
}
