use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mtrank::data::{load_dataset, vectorize, DataError, Dataset, VectorizeOptions, Vectorized};
use mtrank::embeddings::{load_embedding_table, EmbeddingError, EmbeddingTable};
use mtrank::eval::{evaluate, EvalError};
use mtrank::features::LexicalFeatures;
use mtrank::model::{decide, Architecture, CheckpointError, Model, ModelConfig, ModelError, DEFAULT_TIE_EPSILON};
use mtrank::synthetic::gradcheck_instance;
use mtrank::training::{grad_check, train, CostConfig, CostKind, TrainConfig, TrainError};

#[derive(Parser)]
#[command(name = "mtrank", version, about = "Pairwise neural ranking of MT hypotheses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a dataset into network inputs.
    Extract(ExtractArgs),
    /// Train a model and write a checkpoint.
    Train(Box<TrainArgs>),
    /// Compute Kendall's tau of a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Write per-tuple scores and decisions as JSON lines.
    Predict(PredictArgs),
    /// Compare backpropagated gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct FeatureArgs {
    /// Word embeddings in text format (GloVe or word2vec).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Use only the BLEU score instead of its 16 components.
    #[arg(long)]
    bleu_score_only: bool,
    /// Leave out the sentence vectors.
    #[arg(long)]
    no_sentence_vectors: bool,
    /// Add the cosine between hypothesis and reference vectors.
    #[arg(long)]
    cosine: bool,
}

impl FeatureArgs {
    fn options(&self) -> VectorizeOptions {
        VectorizeOptions {
            sentence_vectors: !self.no_sentence_vectors,
            lexical: if self.bleu_score_only { LexicalFeatures::Score } else { LexicalFeatures::Components },
            embedding_similarity: self.cosine,
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    /// Print the inferred feature schema and exit.
    #[arg(long)]
    schema: bool,
    /// Write vectorized examples as JSON lines (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum CostArg {
    Logistic,
    Kendall,
    LogisticThenKendall,
}

impl From<CostArg> for CostKind {
    fn from(c: CostArg) -> Self {
        match c {
            CostArg::Logistic => CostKind::Logistic,
            CostArg::Kendall => CostKind::Kendall,
            CostArg::LogisticThenKendall => CostKind::LogisticThenKendall,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ArchArg {
    MultiLayer,
    SingleLayer,
}

impl From<ArchArg> for Architecture {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::MultiLayer => Architecture::MultiLayer,
            ArchArg::SingleLayer => Architecture::SingleLayer,
        }
    }
}

/// Hyperparameters, settable from a JSON config file or flags. Flags win.
#[derive(Args, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct Hyper {
    #[arg(long, value_enum)]
    cost: Option<CostArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Seed for weight initialisation (and shuffling, unless --shuffle-seed is given).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shuffle_seed: Option<u64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, value_enum)]
    architecture: Option<ArchArg>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tie_weight: Option<f64>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    tie_epsilon: Option<f64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        Hyper { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Hyper {
    fn over(self, base: Hyper) -> Hyper {
        let top = self;
        overlay!(
            base, top, cost, epochs, lr, batch_size, seed, shuffle_seed, hidden, architecture, gamma, beta,
            tie_weight, pretrain_epochs, l2, patience, tie_epsilon
        )
    }

    fn configs(&self, sentence_dim: usize, pairwise_dim: usize) -> (ModelConfig, TrainConfig, CostConfig) {
        let mut m = ModelConfig::new(sentence_dim, pairwise_dim);
        let seed = self.seed.unwrap_or(0);
        m.seed = seed;
        if let Some(h) = self.hidden {
            m.hidden_per_block = h;
        }
        if let Some(a) = self.architecture {
            m.architecture = a.into();
        }

        let mut t = TrainConfig { shuffle_seed: self.shuffle_seed.unwrap_or(seed), ..Default::default() };
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.lr {
            t.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.l2 {
            t.l2 = v;
        }
        if let Some(v) = self.patience {
            t.early_stop_patience = v;
        }
        if let Some(v) = self.tie_epsilon {
            t.tie_epsilon = v;
        }

        let mut c = CostConfig::with_kind(self.cost.map(Into::into).unwrap_or_default());
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.beta {
            c.beta = v;
        }
        if let Some(v) = self.tie_weight {
            c.tie_weight = v;
        }
        c.pretrain_epochs = self.pretrain_epochs;
        (m, t, c)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Validation data; defaults to the training data.
    #[arg(long)]
    valid: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureArgs,
    /// JSON file with hyperparameters (same names as the flags).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    hyper: Hyper,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch training report as JSON lines.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long, default_value_t = DEFAULT_TIE_EPSILON)]
    tie_epsilon: f64,
    /// Write the report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long, default_value_t = DEFAULT_TIE_EPSILON)]
    tie_epsilon: f64,
    /// Output path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "logistic")]
    cost: CostArg,
    #[arg(long, value_enum, default_value = "multi-layer")]
    architecture: ArchArg,
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// Number of random tuples in the checked batch.
    #[arg(long, default_value_t = 8)]
    tuples: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(path: &Path) -> Result<Dataset> {
    let (dataset, report) = load_dataset(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    if report.dropped_ties > 0 {
        eprintln!("{}: dropped {} tied judgments", path.display(), report.dropped_ties);
    }
    Ok(dataset)
}

fn load_table(features: &FeatureArgs) -> Result<Option<EmbeddingTable>> {
    let Some(path) = &features.embeddings else { return Ok(None) };
    let table = load_embedding_table(open(path)?, None).with_context(|| format!("reading {}", path.display()))?;
    if table.duplicates() > 0 {
        eprintln!("{}: ignored {} duplicate tokens", path.display(), table.duplicates());
    }
    Ok(Some(table))
}

/// Without an embedding table or precomputed vectors the network gets only
/// pairwise features.
fn extract(dataset: &Dataset, table: Option<&EmbeddingTable>, options: &VectorizeOptions) -> Result<Vectorized> {
    let mut options = options.clone();
    if table.is_none() && dataset.sentence_dim == 0 {
        options.sentence_vectors = false;
    }
    let v = vectorize(dataset, table, &options)?;
    if v.oov_tokens > 0 {
        eprintln!("{} out-of-vocabulary tokens", v.oov_tokens);
    }
    Ok(v)
}

/// Vectorizes `data` the way `model` expects.
fn extract_for_model(model: &Model, data: &Path, features: &FeatureArgs) -> Result<Vectorized> {
    let mut options = features.options();
    if model.config.sentence_dim == 0 {
        options.sentence_vectors = false;
    }
    let table = load_table(features)?;
    let v = extract(&load(data)?, table.as_ref(), &options)?;
    if v.pairwise_dim != model.config.pairwise_dim {
        bail!(ModelError::ShapeMismatch {
            field: "pairwise features",
            expected: model.config.pairwise_dim,
            found: v.pairwise_dim
        });
    }
    Ok(v)
}

fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(Model::from_json(&text)?)
}

#[derive(Serialize)]
struct Schema<'a> {
    sentence_dim: usize,
    pairwise_dim: usize,
    features: &'a [String],
    external_scores: &'a [String],
}

fn run_extract(args: ExtractArgs) -> Result<()> {
    let dataset = load(&args.data)?;
    let table = load_table(&args.features)?;
    let v = extract(&dataset, table.as_ref(), &args.features.options())?;
    if args.schema {
        let schema = Schema {
            sentence_dim: v.sentence_dim,
            pairwise_dim: v.pairwise_dim,
            features: &v.feature_names,
            external_scores: &dataset.feature_schema,
        };
        println!("{}", serde_json::to_string_pretty(&schema)?);
        return Ok(());
    }
    let mut out = output(args.out.as_deref())?;
    for ex in &v.examples {
        serde_json::to_writer(&mut out, ex)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let base = match &args.config {
        Some(path) => serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))?,
        None => Hyper::default(),
    };
    let hyper = args.hyper.over(base);

    let table = load_table(&args.features)?;
    let options = args.features.options();
    let train_set = extract(&load(&args.data)?, table.as_ref(), &options)?;
    let valid_set = match &args.valid {
        Some(path) => extract(&load(path)?, table.as_ref(), &options)?,
        None => train_set.clone(),
    };
    let (mcfg, tcfg, ccfg) = hyper.configs(train_set.sentence_dim, train_set.pairwise_dim);
    let model = Model::init(mcfg)?;
    let (trained, report) = train(&model, &train_set.examples, &valid_set.examples, &tcfg, &ccfg)?;

    let mut out = create(&args.out)?;
    out.write_all(trained.to_json().as_bytes())?;
    out.flush()?;
    if let Some(path) = &args.report {
        let mut w = create(path)?;
        report.write_jsonl(&mut w)?;
        w.flush()?;
    }
    let secs: f64 = report.wall_clock.iter().map(|d| d.as_secs_f64()).sum();
    if let Some(last) = report.epochs.last() {
        eprintln!(
            "trained {} epochs in {secs:.2}s; final valid tau {:.4}; returned epoch {}",
            report.epochs.len(),
            last.valid_tau,
            report.returned_epoch
        );
    }
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let v = extract_for_model(&model, &args.data, &args.features)?;
    let report = evaluate(&model, &v.examples, args.tie_epsilon)?;
    print!("{}", report.render_table());
    if let Some(path) = &args.report {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    id: &'a str,
    split: &'a str,
    sigma: f64,
    sigma_rev: f64,
    delta: f64,
    decision: mtrank::model::Preference,
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let v = extract_for_model(&model, &args.data, &args.features)?;
    let mut out = output(args.out.as_deref())?;
    for ex in &v.examples {
        let p = model.predict_delta(&ex.input)?;
        let row = Prediction {
            id: &ex.id,
            split: &ex.split,
            sigma: p.sigma,
            sigma_rev: p.sigma_rev,
            delta: p.delta,
            decision: decide(p.delta, args.tie_epsilon),
        };
        serde_json::to_writer(&mut out, &row)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Returns whether the check passed.
fn run_gradcheck(args: GradcheckArgs) -> Result<bool> {
    let (model, batch) = gradcheck_instance(args.seed, args.architecture.into(), args.tuples);
    let cfg = CostConfig::with_kind(args.cost.into());
    let report = grad_check(&model, &batch, &cfg, args.step)?;
    println!(
        "max relative error {:.3e} at {}[{}] over {} parameters",
        report.max_relative_error, report.worst_group, report.worst_index, report.parameters_checked
    );
    Ok(report.max_relative_error <= args.tolerance)
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<io::Error>() {
            return "io";
        }
        if cause.is::<DataError>() {
            return "data";
        }
        if cause.is::<EmbeddingError>() {
            return "embeddings";
        }
        if cause.is::<ModelError>() || cause.is::<CheckpointError>() {
            return "model";
        }
        if cause.is::<TrainError>() {
            return "train";
        }
        if cause.is::<EvalError>() {
            return "eval";
        }
        if cause.is::<serde_json::Error>() {
            return "config";
        }
    }
    "other"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(a) => run_extract(a).map(|_| true),
        Command::Train(a) => run_train(*a).map(|_| true),
        Command::Evaluate(a) => run_evaluate(a).map(|_| true),
        Command::Predict(a) => run_predict(a).map(|_| true),
        Command::Gradcheck(a) => run_gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradcheck: tolerance exceeded");
            ExitCode::FAILURE
        }
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {}: {msg}", error_kind(&e));
            ExitCode::FAILURE
        }
    }
}
