//! Command implementations behind the `vmident` binary.
//!
//! Every command resolves its settings (config file, then flags), validates
//! inputs before touching the output directory, and writes the resolved
//! configuration as `run_config.toml` next to its artifacts.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use vmident_core::data::{
    ingest_csv, prepare_dataset, read_trace_csv, window_trace, write_manifest, write_trace_csv, DataConfig,
    ManifestEntry, SynthConfig, CLASS_NAMES,
};
use vmident_core::model::{load_with_normalizer, save_with_normalizer, Variant};
use vmident_core::tensor::softmax;
use vmident_core::training::{evaluate, sweep, train, EvalReport, TrainConfig, TABLE_WINDOWS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] vmident_core::Error),
}

impl CliError {
    /// 0 success, 1 usage, 2 data, 3 training divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(vmident_core::Error::Divergence { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "vmident", version, about = "Identify VM behavior classes from resource-usage traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic traces and a manifest.
    Generate(CommonArgs),
    /// Train one model and report its test error.
    Train(CommonArgs),
    /// Evaluate a trained model on every window of a manifest.
    Evaluate(CommonArgs),
    /// Print per-window class probabilities for one trace.
    Classify(CommonArgs),
    /// Train every (variant, window) pair and print a comparison table.
    Compare(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Weight file (evaluate, classify).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Trace CSV (classify).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Comma-separated windows (compare).
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<usize>>,
    /// Comma-separated variants (compare).
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<Variant>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub windows: Vec<usize>,
    pub variants: Vec<Variant>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            windows: TABLE_WINDOWS.to_vec(),
            variants: Variant::ALL.to_vec(),
        }
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub compare: CompareConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid run config: {e}")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Config file first, flags on top.
    pub fn resolve(command: &str, args: &CommonArgs) -> CliResult<Self> {
        let mut config = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                Self::from_toml_str(&text)?
            }
            None => RunConfig::default(),
        };
        config.command = command.to_string();
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        config.train.seed = config.seed;
        if let Some(w) = args.window {
            config.train.window = w;
        }
        if let Some(v) = args.variant {
            config.train.variant = v;
        }
        if args.manifest.is_some() {
            config.manifest = args.manifest.clone();
        }
        if args.weights.is_some() {
            config.weights = args.weights.clone();
        }
        if args.csv.is_some() {
            config.csv = args.csv.clone();
        }
        if let Some(w) = &args.windows {
            config.compare.windows = w.clone();
        }
        if let Some(v) = &args.variants {
            config.compare.variants = v.clone();
        }
        Ok(config)
    }

    fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn require_out(args: &CommonArgs) -> CliResult<&Path> {
    RunConfig::require(&args.out, "out")
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| vmident_core::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| vmident_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the text meant for stdout.
pub fn run<I, T>(args: I) -> CliResult<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(usage)?;
    execute(&cli.command)
}

pub fn execute(command: &Command) -> CliResult<String> {
    match command {
        Command::Generate(a) => cmd_generate(&RunConfig::resolve("generate", a)?, require_out(a)?),
        Command::Train(a) => cmd_train(&RunConfig::resolve("train", a)?, require_out(a)?),
        Command::Evaluate(a) => cmd_evaluate(&RunConfig::resolve("evaluate", a)?, a.out.as_deref()),
        Command::Classify(a) => cmd_classify(&RunConfig::resolve("classify", a)?),
        Command::Compare(a) => cmd_compare(&RunConfig::resolve("compare", a)?, require_out(a)?),
    }
}

/// Writes `traces/<vm_id>.csv` for every synthetic VM plus `manifest.csv`.
pub fn cmd_generate(config: &RunConfig, out: &Path) -> CliResult<String> {
    config.synth.validate().map_err(usage)?;
    let traces = config.synth.synthesize(config.seed)?;
    let trace_dir = out.join("traces");
    create_dir(&trace_dir)?;
    let mut entries = Vec::with_capacity(traces.len());
    for t in &traces {
        let path = trace_dir.join(format!("{}.csv", t.vm_id));
        write_trace_csv(t, &path)?;
        entries.push(ManifestEntry {
            path,
            vm_id: t.vm_id.clone(),
            class_label: t.class_label,
        });
    }
    write_manifest(&entries, &out.join("manifest.csv"))?;
    write_file(&out.join("run_config.toml"), config.to_toml_string())?;
    Ok(format!(
        "wrote {} traces of {} steps to {}\n",
        traces.len(),
        config.synth.length,
        out.display()
    ))
}

#[derive(Debug, Serialize)]
struct TrainReport<'a> {
    variant: Variant,
    window: usize,
    overlap: bool,
    train_samples: usize,
    validation_samples: usize,
    test_samples: usize,
    best_epoch: usize,
    best_val_accuracy: f64,
    test: &'a EvalReport,
}

/// Trains on the manifest's traces and writes `model.dvmw`, `history.log`,
/// `report.json` and `run_config.toml`. Nothing is written unless training
/// succeeds.
pub fn cmd_train(config: &RunConfig, out: &Path) -> CliResult<String> {
    config.train.validate().map_err(usage)?;
    let manifest = RunConfig::require(&config.manifest, "manifest")?;
    let traces = ingest_csv(manifest)?;
    let split = prepare_dataset(&traces, config.train.window, &config.data, config.seed)?;
    let outcome = train(&split, &config.train)?;
    let mut test = evaluate(&outcome.network, &split.test)?;
    test.epoch_of_best = Some(outcome.history.best_epoch);
    let report = TrainReport {
        variant: config.train.variant,
        window: config.train.window,
        overlap: config.data.overlap_policy().uses_overlap(config.train.window),
        train_samples: split.train.len(),
        validation_samples: split.validation.len(),
        test_samples: split.test.len(),
        best_epoch: outcome.history.best_epoch,
        best_val_accuracy: outcome.history.best().map_or(0.0, |r| r.val_accuracy),
        test: &test,
    };
    create_dir(out)?;
    save_with_normalizer(&outcome.network, Some(&split.normalizer), out.join("model.dvmw"))?;
    write_file(&out.join("history.log"), outcome.history.to_log())?;
    write_file(
        &out.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    write_file(&out.join("run_config.toml"), config.to_toml_string())?;
    Ok(format!(
        "{} W={}: test error {:.2}% ({} test windows, best epoch {})\n",
        config.train.variant.display_name(),
        config.train.window,
        test.error_percent,
        split.test.len(),
        outcome.history.best_epoch
    ))
}

/// Evaluates a weight file on every window of the manifest's traces, using
/// the normalizer stored with the weights.
pub fn cmd_evaluate(config: &RunConfig, out: Option<&Path>) -> CliResult<String> {
    let weights = RunConfig::require(&config.weights, "weights")?;
    let manifest = RunConfig::require(&config.manifest, "manifest")?;
    let (net, normalizer) = load_with_normalizer(weights)?;
    let window = net.spec().window;
    let overlap = config.data.overlap_policy().uses_overlap(window);
    let traces = ingest_csv(manifest)?;
    let mut samples = Vec::new();
    for t in &traces {
        samples.extend(window_trace(t, window, overlap)?);
    }
    if let Some(n) = &normalizer {
        vmident_core::data::apply_normalizer(&mut samples, n)?;
    }
    let report = evaluate(&net, &samples)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(
            &dir.join("report.json"),
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
        write_file(&dir.join("run_config.toml"), config.to_toml_string())?;
    }
    Ok(format!(
        "{} W={window}: accuracy {:.4}, error {:.2}% over {} windows\n",
        net.spec().variant.display_name(),
        report.accuracy,
        report.error_percent,
        report.total()
    ))
}

/// Per-window probabilities as CSV (`start,<class>...,predicted`) followed
/// by a `# majority` summary line.
pub fn cmd_classify(config: &RunConfig) -> CliResult<String> {
    let weights = RunConfig::require(&config.weights, "weights")?;
    let csv = RunConfig::require(&config.csv, "csv")?;
    let (net, normalizer) = load_with_normalizer(weights)?;
    let window = net.spec().window;
    let vm_id = csv.file_stem().map_or("trace".into(), |s| s.to_string_lossy().into_owned());
    let trace = read_trace_csv(csv, &vm_id, 0)?;
    if trace.len() < window {
        return Err(vmident_core::Error::Dataset(format!(
            "{} has {} rows, the model needs at least {window}",
            csv.display(),
            trace.len()
        ))
        .into());
    }
    let overlap = config.data.overlap_policy().uses_overlap(window);
    let mut samples = window_trace(&trace, window, overlap)?;
    if let Some(n) = &normalizer {
        vmident_core::data::apply_normalizer(&mut samples, n)?;
    }
    let (batch, _) = vmident_core::data::stack_windows(samples.iter())?;
    let probs = softmax(&net.forward_eval(&batch)?)?;
    let classes = net.spec().classes;
    let class_name = |c: usize| CLASS_NAMES.get(c).map_or(c.to_string(), |s| s.to_string());
    let mut out = String::from("start");
    for c in 0..classes {
        write!(out, ",{}", class_name(c)).unwrap();
    }
    out.push_str(",predicted\n");
    let mut votes = vec![0usize; classes];
    for (s, row) in samples.iter().zip(probs.data().chunks(classes)) {
        let pred = (0..classes).fold(0, |b, c| if row[c] > row[b] { c } else { b });
        votes[pred] += 1;
        write!(out, "{}", s.origin.start).unwrap();
        for p in row {
            write!(out, ",{p}").unwrap();
        }
        writeln!(out, ",{}", class_name(pred)).unwrap();
    }
    let winner = (0..classes).fold(0, |b, c| if votes[c] > votes[b] { c } else { b });
    writeln!(
        out,
        "# majority {vm_id}: {} ({} of {} windows)",
        class_name(winner),
        votes[winner],
        samples.len()
    )
    .unwrap();
    Ok(out)
}

/// Runs the sweep and writes `table.txt`, `table.json`, `plot_data.csv`.
pub fn cmd_compare(config: &RunConfig, out: &Path) -> CliResult<String> {
    let manifest = RunConfig::require(&config.manifest, "manifest")?;
    let mut probe = config.train.clone();
    for &w in &config.compare.windows {
        probe.window = w;
        probe.validate().map_err(usage)?;
    }
    let traces = ingest_csv(manifest)?;
    let table = sweep(
        &traces,
        &config.compare.windows,
        &config.compare.variants,
        &config.train,
        &config.data,
    )?;
    let text = table.to_text();
    create_dir(out)?;
    write_file(&out.join("table.txt"), &text)?;
    write_file(&out.join("table.json"), table.to_json())?;
    write_file(&out.join("plot_data.csv"), table.plot_csv())?;
    write_file(&out.join("run_config.toml"), config.to_toml_string())?;
    Ok(text)
}
