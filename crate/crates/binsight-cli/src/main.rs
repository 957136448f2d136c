//! binsight command line: chains the pipeline from raw binaries to reports.
//!
//! Exit codes: 0 success, 1 data/model error, 2 usage/config error. Input
//! paths that cannot be opened count as usage errors; unparseable file
//! *content* counts as a data error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use binsight::dataset::synth::{write_corpus, SynthSpec};
use binsight::dataset::{load_csv, stratified_split, write_csv};
use binsight::eval::{cross_validate, evaluate, export_heatmap, CVResult, EvalReport};
use binsight::featurize::{featurize_bytes, FeatureConfig, Interpolation, WidthRule};
use binsight::forest::{load_model, save_model, train_forest, ForestConfig, ForestModel};

mod featurize_cmd;

use featurize_cmd::run_featurize;

#[derive(Parser)]
#[command(name = "binsight", version, about = "Binary-to-image malware family classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a directory of binaries into a labeled feature CSV
    Featurize(FeaturizeArgs),
    /// Generate a synthetic labeled corpus from a spec file
    Synth(SynthArgs),
    /// Stratified split of a feature CSV into train and test CSVs
    Split(SplitArgs),
    /// Train a random forest on a feature CSV
    Train(TrainArgs),
    /// Predict families for a feature CSV or a single raw binary
    Predict(PredictArgs),
    /// Evaluate a model on a test CSV (report, confusion CSV, heatmap)
    Eval(EvalArgs),
    /// Stratified k-fold cross-validation on a feature CSV
    Cv(CvArgs),
}

#[derive(Args)]
pub struct FeaturizeArgs {
    /// Directory of binaries (one subdirectory per family, or use --manifest)
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Tab-separated `path<TAB>family` manifest overriding directory labels
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureFlags,
    /// Fail (exit 1) on the first unreadable or empty file instead of skipping
    #[arg(long)]
    strict: bool,
    /// Also dump each file's pre-resize image as PGM under this directory
    #[arg(long)]
    pgm_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML spec describing families, motifs, and twin pairs
    #[arg(long)]
    spec: PathBuf,
    /// Output corpus directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_test: PathBuf,
}

#[derive(Args)]
struct ForestFlags {
    /// Number of trees in the ensemble
    #[arg(long, default_value_t = 500)]
    trees: usize,
    /// Features tried per node (default: floor(sqrt(feature count)))
    #[arg(long)]
    mtry: Option<usize>,
    /// Minimum samples a node needs before it may split in two
    #[arg(long, default_value_t = 1)]
    min_node: usize,
    /// Depth limit (default: unlimited)
    #[arg(long)]
    depth: Option<usize>,
    /// Train each tree on the full data instead of a bootstrap resample
    #[arg(long)]
    no_bootstrap: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl ForestFlags {
    fn to_config(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.trees,
            mtry: self.mtry,
            min_node_size: self.min_node,
            max_depth: self.depth,
            bootstrap: !self.no_bootstrap,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
pub struct FeatureFlags {
    /// Side of the resized square image (feature length is side^2)
    #[arg(long, default_value_t = 32)]
    side: usize,
    /// Resize interpolation: nearest or bilinear
    #[arg(long, default_value = "nearest")]
    interp: String,
    /// Width-rule override file (`MAX_BYTES WIDTH` lines, final `* WIDTH`)
    #[arg(long)]
    width_rule: Option<PathBuf>,
}

impl FeatureFlags {
    fn to_config(&self) -> Result<FeatureConfig, CliError> {
        let interpolation: Interpolation = self
            .interp
            .parse()
            .map_err(|e: binsight::Error| CliError::Usage(e.to_string()))?;
        let width_rule = match &self.width_rule {
            None => WidthRule::default(),
            Some(path) => {
                let text = read_input_text(path)?;
                WidthRule::parse(&text).map_err(|e| CliError::Usage(e.to_string()))?
            }
        };
        let config = FeatureConfig { side: self.side, interpolation, width_rule };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training feature CSV
    #[arg(long)]
    input: PathBuf,
    /// Output model path
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    forest: ForestFlags,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV (by `.csv` extension) or a single raw binary
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    features: FeatureFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test feature CSV
    #[arg(long)]
    input: PathBuf,
    /// Report path; confusion CSV and heatmap PGM default to siblings
    #[arg(long)]
    out_report: PathBuf,
    #[arg(long)]
    out_confusion: Option<PathBuf>,
    #[arg(long)]
    out_heatmap: Option<PathBuf>,
    /// Integer upscale factor for the heatmap PGM
    #[arg(long, default_value_t = 16)]
    heatmap_scale: usize,
}

#[derive(Args)]
struct CvArgs {
    /// Training feature CSV
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[command(flatten)]
    forest: ForestFlags,
    #[arg(long)]
    out_report: PathBuf,
    #[arg(long)]
    out_confusion: Option<PathBuf>,
    #[arg(long)]
    out_heatmap: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    heatmap_scale: usize,
}

/// Errors carry their exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2: bad flags or unusable configuration/input paths.
    Usage(String),
    /// Exit 1: unparseable data, model mismatch, failed pipeline step.
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<binsight::Error> for CliError {
    fn from(e: binsight::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Reads an input file, mapping "cannot open" to a usage error.
pub fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn read_input_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, bytes)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    // BINSIGHT_THREADS caps parallelism; results never depend on it.
    if let Ok(value) = std::env::var("BINSIGHT_THREADS") {
        match value.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid BINSIGHT_THREADS={value:?}"),
        }
    }

    let result = match cli.command {
        Command::Featurize(args) => run_featurize(args),
        Command::Synth(args) => run_synth(args),
        Command::Split(args) => run_split(args),
        Command::Train(args) => run_train(args),
        Command::Predict(args) => run_predict(args),
        Command::Eval(args) => run_eval(args),
        Command::Cv(args) => run_cv(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run_synth(args: SynthArgs) -> Result<(), CliError> {
    let text = read_input_text(&args.spec)?;
    let spec = SynthSpec::from_toml_str(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    let count = write_corpus(&spec, args.seed, &args.out)
        .map_err(|e| CliError::Data(e.to_string()))?;
    println!("seed = {}", args.seed);
    println!(
        "wrote {count} binaries across {} families to {} (manifest: labels.tsv)",
        spec.families.len(),
        args.out.display()
    );
    Ok(())
}

fn run_split(args: SplitArgs) -> Result<(), CliError> {
    if !(args.fraction > 0.0 && args.fraction < 1.0) {
        return Err(CliError::Usage(format!(
            "--fraction must be in (0, 1), got {}",
            args.fraction
        )));
    }
    let dataset = load_csv(&read_input(&args.input)?)?;
    let split = stratified_split(&dataset, args.fraction, args.seed)?;
    write_output(&args.out_train, &write_csv(&split.train)?)?;
    write_output(&args.out_test, &write_csv(&split.test)?)?;
    println!("seed = {}", args.seed);
    println!(
        "split {} samples into {} train / {} test across {} families",
        dataset.len(),
        split.train.len(),
        split.test.len(),
        dataset.n_classes()
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let dataset = load_csv(&read_input(&args.input)?)?;
    let config = args.forest.to_config();
    let model = train_forest(&dataset, &config)?;
    write_output(&args.out, &save_model(&model))?;
    println!("seed = {}", config.seed);
    println!(
        "trained {} trees on {} samples ({} families, {} features) -> {}",
        model.trees().len(),
        dataset.len(),
        model.n_classes(),
        model.feature_len(),
        args.out.display()
    );
    Ok(())
}

fn load_model_file(path: &Path) -> Result<ForestModel, CliError> {
    Ok(load_model(&read_input(path)?)?)
}

fn run_predict(args: PredictArgs) -> Result<(), CliError> {
    let model = load_model_file(&args.model)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();

    // A reader closing the pipe early (predict | head) is a normal way to
    // consume a prediction stream, not an error.
    let mut emit = |class: usize, proba: &[f64]| -> Result<bool, CliError> {
        use std::io::Write;
        match writeln!(out, "{}\t{:.4}", model.label_names()[class], proba[class]) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(false),
            Err(e) => Err(CliError::Data(format!("cannot write predictions: {e}"))),
        }
    };

    let is_csv = args.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let dataset = load_csv(&read_input(&args.input)?)?;
        for sample in dataset.samples() {
            let (class, proba) = model.predict_proba_argmax(sample.features.values())?;
            if !emit(class, &proba)? {
                break;
            }
        }
    } else {
        let bytes = read_input(&args.input)?;
        let config = args.features.to_config()?;
        if config.feature_len() != model.feature_len() {
            return Err(CliError::Data(format!(
                "featurizer produces {} features but the model expects {}",
                config.feature_len(),
                model.feature_len()
            )));
        }
        let features = featurize_bytes(&bytes, &config)?;
        let (class, proba) = model.predict_proba_argmax(features.values())?;
        emit(class, &proba)?;
    }
    Ok(())
}

fn report_artifacts(
    report: &EvalReport,
    out_report: &Path,
    rendered: String,
    out_confusion: Option<PathBuf>,
    out_heatmap: Option<PathBuf>,
    heatmap_scale: usize,
) -> Result<(), CliError> {
    if heatmap_scale == 0 {
        return Err(CliError::Usage("--heatmap-scale must be at least 1".into()));
    }
    let confusion_path =
        out_confusion.unwrap_or_else(|| out_report.with_extension("confusion.csv"));
    let heatmap_path = out_heatmap.unwrap_or_else(|| out_report.with_extension("heatmap.pgm"));
    write_output(out_report, rendered.as_bytes())?;
    write_output(&confusion_path, report.confusion.to_csv().as_bytes())?;
    let heatmap = export_heatmap(&report.confusion, heatmap_scale)?;
    write_output(&heatmap_path, &heatmap.to_pgm())?;
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<(), CliError> {
    let model = load_model_file(&args.model)?;
    let test = load_csv(&read_input(&args.input)?)?;
    let report = evaluate(&model, &test)?;
    let rendered = report.render();
    report_artifacts(
        &report,
        &args.out_report,
        rendered,
        args.out_confusion,
        args.out_heatmap,
        args.heatmap_scale,
    )?;
    println!(
        "accuracy = {:.4}  kappa = {:.4}  ci95 = [{:.4}, {:.4}]  n = {}",
        report.accuracy, report.kappa, report.accuracy_lower, report.accuracy_upper, report.n
    );
    Ok(())
}

fn run_cv(args: CvArgs) -> Result<(), CliError> {
    if args.folds < 2 {
        return Err(CliError::Usage(format!("--folds must be at least 2, got {}", args.folds)));
    }
    let dataset = load_csv(&read_input(&args.input)?)?;
    let config = args.forest.to_config();
    let result: CVResult = cross_validate(&dataset, args.folds, &config, config.seed)?;
    let rendered = result.render();
    report_artifacts(
        &result.pooled_report,
        &args.out_report,
        rendered,
        args.out_confusion,
        args.out_heatmap,
        args.heatmap_scale,
    )?;
    println!("seed = {}", config.seed);
    println!(
        "pooled accuracy = {:.4}  mean fold accuracy = {:.4}  kappa = {:.4}  ci95 = [{:.4}, {:.4}]",
        result.pooled_report.accuracy,
        result.mean_accuracy,
        result.pooled_report.kappa,
        result.pooled_report.accuracy_lower,
        result.pooled_report.accuracy_upper
    );
    Ok(())
}

