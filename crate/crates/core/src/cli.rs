//! Command-line front end. Every successful run writes its outputs plus a
//! `manifest.json` into the `--out` directory.
//!
//! Exit codes: 0 success, 2 invalid flags, 3 input validation failure,
//! 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::builder::TypedValueParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::classifiers::{mlp, svm, ClassifierConfig};
use crate::dataset::{self, EmbeddingDataset, EmbeddingFormat, LabelAssignment};
use crate::error::{Error, ErrorKind, Result};
use crate::metrics::{self, ReportOptions};
use crate::prune::{self, LabelMode, PruneResult, PseudoLabelOptions};
use crate::ssl_sim::{self, PoolVariant, Scenario, SimulationConfig};
use crate::synthetic::{self, ScenarioKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "prunessl", version, about = "Confidence-based pruning of unlabeled embedding pools")]
pub struct Cli {
    /// Cap on worker threads (0 = all cores). Outputs do not depend on it.
    #[arg(long, global = true, env = "PRUNESSL_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prune an unlabeled pool by classifier confidence.
    Prune(PruneArgs),
    /// Prune with a comparison policy (random or coverage).
    Baseline(BaselineArgs),
    /// Compare self-training across pool variants on a synthetic scenario.
    Simulate(SimulateArgs),
    /// Separability metrics for a dataset or a subset of it.
    Report(ReportArgs),
    /// Write a synthetic scenario as an embedding file plus a label file.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Binary,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Pseudo,
    Oracle,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierArg {
    LinearSvm,
    RbfSvm,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselinePolicy {
    Random,
    Coverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ScenarioArg {
    TwoGaussians,
    Moons,
    RingVsBlob,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::TwoGaussians => ScenarioKind::TwoGaussians,
            ScenarioArg::Moons => ScenarioKind::Moons,
            ScenarioArg::RingVsBlob => ScenarioKind::RingVsBlob,
        }
    }
}

fn keep_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1], got {v}"))
    }
}

fn positive_real(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a positive number, got {v}"))
    }
}

fn open_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1), got {v}"))
    }
}

fn finite_real(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_nan() {
        Err("must be a number".into())
    } else {
        Ok(v)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Embedding file (binary `.sepb` or `.csv`).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Override the format implied by the file extension.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

impl InputArgs {
    fn load(&self) -> Result<EmbeddingDataset> {
        let format = match self.format {
            Some(FormatArg::Binary) => EmbeddingFormat::Binary,
            Some(FormatArg::Csv) => EmbeddingFormat::Csv,
            None => EmbeddingFormat::from_path(&self.embeddings),
        };
        dataset::load_embeddings(&self.embeddings, format)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClassifierArgs {
    /// Simple classifier whose confidence ranks the examples.
    #[arg(long, value_enum, default_value = "rbf-svm")]
    pub classifier: ClassifierArg,
    /// SVM soft-margin penalty.
    #[arg(long = "c", default_value_t = 1.0, value_parser = positive_real)]
    pub c: f64,
    /// RBF width; defaults to 1 / (d * feature variance).
    #[arg(long, value_parser = positive_real)]
    pub gamma: Option<f64>,
    /// Hidden layer widths of the network, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2, value_parser = positive_real)]
    pub learning_rate: f64,
}

impl ClassifierArgs {
    fn config(&self) -> ClassifierConfig {
        classifier_config(self.classifier, self.c, self.gamma, &self.hidden, self.epochs, self.learning_rate)
    }
}

fn classifier_config(
    kind: ClassifierArg,
    c: f64,
    gamma: Option<f64>,
    hidden: &[usize],
    epochs: usize,
    learning_rate: f64,
) -> ClassifierConfig {
    match kind {
        ClassifierArg::LinearSvm => ClassifierConfig::LinearSvm {
            c,
            tol: svm::DEFAULT_TOL,
            max_passes: svm::DEFAULT_MAX_PASSES,
        },
        ClassifierArg::RbfSvm => ClassifierConfig::RbfSvm {
            c,
            gamma,
            tol: svm::DEFAULT_TOL,
            max_passes: svm::DEFAULT_MAX_PASSES,
        },
        ClassifierArg::Mlp => ClassifierConfig::Mlp {
            hidden_sizes: hidden.to_vec(),
            epochs,
            learning_rate,
            batch_size: None,
        },
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PruneArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Where the labels for classifier training come from.
    #[arg(long, value_enum, default_value = "pseudo")]
    pub mode: ModeArg,
    /// `id,label` CSV; required by oracle and external modes. In pseudo mode
    /// it is used only for reporting.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Cluster count for k-means pseudo-labels.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    /// Cluster L2-normalized rows.
    #[arg(long)]
    pub normalize: bool,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    /// Fraction of the pool to keep.
    #[arg(long, default_value_t = prune::DEFAULT_KEEP_FRACTION, value_parser = keep_fraction)]
    pub keep: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Folds for the linear-probe metric in the reports.
    #[arg(long, default_value_t = metrics::DEFAULT_FOLDS, value_parser = clap::value_parser!(u64).range(2..).map(|v| v as usize))]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub policy: BaselinePolicy,
    #[arg(long, default_value_t = prune::DEFAULT_COVERAGE_K, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub coverage_k: usize,
    /// `id,label` CSV used only for reporting.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = prune::DEFAULT_KEEP_FRACTION, value_parser = keep_fraction)]
    pub keep: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = metrics::DEFAULT_FOLDS, value_parser = clap::value_parser!(u64).range(2..).map(|v| v as usize))]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "two_gaussians")]
    pub scenario: ScenarioArg,
    /// Noise scale; 1.5 gives unit-variance classes at (+-1.5, 0).
    #[arg(long, default_value_t = 1.5, value_parser = finite_real)]
    pub overlap: f64,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(2..).map(|v| v as usize))]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..).map(|v| v as usize))]
    pub dim: usize,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub labeled_per_class: usize,
    #[arg(long, default_value_t = 0.2, value_parser = open_fraction)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = prune::DEFAULT_KEEP_FRACTION, value_parser = keep_fraction)]
    pub keep: f64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = ssl_sim::DEFAULT_ROUNDS, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub rounds: usize,
    /// Minimum predicted-class decision value for adopting a pseudo-label.
    #[arg(long, default_value_t = ssl_sim::DEFAULT_THRESHOLD, value_parser = finite_real)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "linear-svm")]
    pub base_classifier: ClassifierArg,
    #[arg(long, value_enum, default_value = "rbf-svm")]
    pub prune_classifier: ClassifierArg,
    #[arg(long, default_value_t = prune::DEFAULT_COVERAGE_K, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub coverage_k: usize,
    /// Also run the prune-then-reintroduce experiment.
    #[arg(long)]
    pub curriculum: bool,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub phase1: usize,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub phase2: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// `id,label` CSV of true labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// `id,label` CSV of cluster assignments, for purity.
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// `id` CSV selecting the subset to report on (e.g. a kept.csv).
    #[arg(long)]
    pub subset: Option<PathBuf>,
    #[arg(long, default_value_t = metrics::DEFAULT_FOLDS, value_parser = clap::value_parser!(u64).range(2..).map(|v| v as usize))]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "two_gaussians")]
    pub scenario: ScenarioArg,
    #[arg(long, default_value_t = 1.5, value_parser = finite_real)]
    pub overlap: f64,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(2..).map(|v| v as usize))]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..).map(|v| v as usize))]
    pub dim: usize,
    #[arg(long, value_enum, default_value = "binary")]
    pub format: FormatArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct InputDigest {
    path: PathBuf,
    sha256: String,
}

/// Reproduction record written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    command: &'static str,
    argv: Vec<String>,
    config: serde_json::Value,
    seed: u64,
    inputs: Vec<InputDigest>,
    tool_version: &'static str,
    /// Seconds since the Unix epoch; the only field that differs between reruns.
    timestamp: u64,
}

fn digest(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

struct Output<'a> {
    dir: &'a Path,
}

impl<'a> Output<'a> {
    fn create(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir })
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        let mut text = contents.to_string();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    fn manifest(
        &self,
        command: &'static str,
        argv: &[OsString],
        config: impl Serialize,
        seed: u64,
        inputs: &[&Path],
    ) -> Result<()> {
        let manifest = RunManifest {
            command,
            argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        self.write("manifest.json", &serde_json::to_string_pretty(&manifest)?)
    }
}

fn load_labels_for(path: &Path, data: &EmbeddingDataset, as_oracle: bool) -> Result<LabelAssignment> {
    dataset::load_labels(path, data.ids(), as_oracle)
}

fn write_prune_outputs(
    out: &Output<'_>,
    data: &EmbeddingDataset,
    result: &PruneResult,
    truth: Option<&LabelAssignment>,
    folds: usize,
    seed: u64,
) -> Result<()> {
    out.write("result.json", &result.to_json(data)?)?;
    result.write_kept_csv(&out.dir.join("kept.csv"))?;
    let options = ReportOptions {
        folds,
        seed,
        ..ReportOptions::default()
    };
    let clusters = result.pseudo_labels.as_ref();
    let full = metrics::report(data, None, truth, clusters, &options)?;
    let kept = metrics::report(data, Some(&result.kept_ids), truth, clusters, &options)?;
    out.write("report_full.json", &full.to_json()?)?;
    out.write("report_kept.json", &kept.to_json()?)
}

fn cmd_prune(args: &PruneArgs, argv: &[OsString]) -> Result<()> {
    let data = args.input.load()?;
    let mode = match args.mode {
        ModeArg::Pseudo => LabelMode::Pseudo,
        ModeArg::Oracle => LabelMode::Oracle,
        ModeArg::External => LabelMode::External,
    };
    let labels = args
        .labels
        .as_deref()
        .map(|p| load_labels_for(p, &data, mode != LabelMode::External))
        .transpose()?;
    let classifier = args.classifier.config();
    let pseudo = PseudoLabelOptions {
        k: args.k.map(|k| k as usize),
        l2_normalize: args.normalize,
    };
    let result = prune::run_prunessl(&data, mode, labels.as_ref(), &classifier, args.keep, args.seed, &pseudo)?;

    let out = Output::create(&args.out)?;
    write_prune_outputs(&out, &data, &result, labels.as_ref(), args.folds, args.seed)?;
    let mut inputs = vec![args.input.embeddings.as_path()];
    inputs.extend(args.labels.as_deref());
    out.manifest(
        "prune",
        argv,
        json!({
            "args": args,
            "prune": result.config,
            "classifier": classifier,
            "pseudo_labeling": pseudo,
        }),
        args.seed,
        &inputs,
    )
}

fn cmd_baseline(args: &BaselineArgs, argv: &[OsString]) -> Result<()> {
    let data = args.input.load()?;
    let labels = args
        .labels
        .as_deref()
        .map(|p| load_labels_for(p, &data, true))
        .transpose()?;
    let mut result = match args.policy {
        BaselinePolicy::Random => prune::prune_random(&data, args.keep, args.seed)?,
        BaselinePolicy::Coverage => prune::prune_coverage(&data, args.coverage_k, args.keep, args.seed)?,
    };
    if let Some(l) = &labels {
        result.class_histogram_kept = Some(result.class_histogram(&data, l)?);
    }
    let out = Output::create(&args.out)?;
    write_prune_outputs(&out, &data, &result, labels.as_ref(), args.folds, args.seed)?;
    let mut inputs = vec![args.input.embeddings.as_path()];
    inputs.extend(args.labels.as_deref());
    out.manifest(
        "baseline",
        argv,
        json!({ "args": args, "prune": result.config }),
        args.seed,
        &inputs,
    )
}

fn cmd_simulate(args: &SimulateArgs, argv: &[OsString]) -> Result<()> {
    let scenario = Scenario {
        kind: args.scenario.into(),
        n_per_class: args.n_per_class,
        overlap: args.overlap,
        dim: args.dim,
        per_class_labeled: args.labeled_per_class,
        test_fraction: args.test_fraction,
    };
    let defaults = ClassifierArgs {
        classifier: ClassifierArg::LinearSvm,
        c: svm::DEFAULT_C,
        gamma: None,
        hidden: vec![mlp::DEFAULT_HIDDEN],
        epochs: mlp::DEFAULT_EPOCHS,
        learning_rate: mlp::DEFAULT_LEARNING_RATE,
    };
    let config = SimulationConfig {
        keep_fraction: args.keep,
        repetitions: args.reps,
        seed: args.seed,
        base_classifier: ClassifierArgs {
            classifier: args.base_classifier,
            ..defaults.clone()
        }
        .config(),
        pseudo_label_threshold: args.threshold,
        rounds: args.rounds,
        prune_classifier: ClassifierArgs {
            classifier: args.prune_classifier,
            ..defaults
        }
        .config(),
        coverage_k: args.coverage_k,
        variants: PoolVariant::ALL.to_vec(),
    };
    let comparison = ssl_sim::compare_pools(&scenario, &config)?;
    let curriculum = args
        .curriculum
        .then(|| ssl_sim::curriculum_reintroduce(&scenario, &config, args.phase1, args.phase2))
        .transpose()?;

    let out = Output::create(&args.out)?;
    out.write("comparison.csv", &comparison.to_csv())?;
    out.write("summary.json", &comparison.summary_json()?)?;
    if let Some(c) = &curriculum {
        out.write("curriculum.csv", &c.to_csv())?;
        out.write("curriculum_summary.json", &c.summary_json()?)?;
    }
    out.manifest(
        "simulate",
        argv,
        json!({ "args": args, "scenario": scenario, "simulation": config }),
        args.seed,
        &[],
    )
}

fn cmd_report(args: &ReportArgs, argv: &[OsString]) -> Result<()> {
    let data = args.input.load()?;
    let labels = args
        .labels
        .as_deref()
        .map(|p| load_labels_for(p, &data, true))
        .transpose()?;
    let clusters = args
        .clusters
        .as_deref()
        .map(|p| load_labels_for(p, &data, false))
        .transpose()?;
    let subset = args.subset.as_deref().map(dataset::load_id_list).transpose()?;
    let options = ReportOptions {
        folds: args.folds,
        seed: args.seed,
        ..ReportOptions::default()
    };
    let report = metrics::report(&data, subset.as_deref(), labels.as_ref(), clusters.as_ref(), &options)?;

    let out = Output::create(&args.out)?;
    out.write("report.json", &report.to_json()?)?;
    let mut inputs = vec![args.input.embeddings.as_path()];
    inputs.extend(args.labels.as_deref());
    inputs.extend(args.clusters.as_deref());
    inputs.extend(args.subset.as_deref());
    out.manifest("report", argv, json!({ "args": args }), args.seed, &inputs)
}

fn cmd_generate(args: &GenerateArgs, argv: &[OsString]) -> Result<()> {
    let (data, labels) =
        synthetic::make_synthetic(args.scenario.into(), args.n_per_class, args.overlap, args.dim, args.seed)?;
    let out = Output::create(&args.out)?;
    let (name, format) = match args.format {
        FormatArg::Binary => ("embeddings.sepb", EmbeddingFormat::Binary),
        FormatArg::Csv => ("embeddings.csv", EmbeddingFormat::Csv),
    };
    dataset::write_embeddings(&data, &out.dir.join(name), format)?;
    dataset::write_labels(&out.dir.join("labels.csv"), data.ids(), &labels)?;
    out.manifest("generate", argv, json!({ "args": args }), args.seed, &[])
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::InvalidArgument => EXIT_USAGE,
        ErrorKind::Input => EXIT_INPUT,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}

fn execute(cli: &Cli, argv: &[OsString]) -> Result<()> {
    match &cli.command {
        Command::Prune(a) => cmd_prune(a, argv),
        Command::Baseline(a) => cmd_baseline(a, argv),
        Command::Simulate(a) => cmd_simulate(a, argv),
        Command::Report(a) => cmd_report(a, argv),
        Command::Generate(a) => cmd_generate(a, argv),
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr as a single line.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: could not start {} worker threads: {e}", cli.threads);
            return EXIT_USAGE;
        }
    };
    match pool.install(|| execute(&cli, &argv)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.kind())
        }
    }
}
