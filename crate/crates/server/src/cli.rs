//! The `sketchnet` command line. Exit codes: 0 success, 1 usage error,
//! 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Deserialize;
use sketchnet::checkpoint::{load_checkpoint, save_checkpoint, TrainingMetadata};
use sketchnet::dataset::{split_dataset, Dataset, DatasetTag};
use sketchnet::ensemble::BundleManifest;
use sketchnet::eval::{evaluate_grid, to_csv, to_text, GridDataset, GridModel};
use sketchnet::experiment::encode_all;
use sketchnet::game::RoundConfig;
use sketchnet::nn::gradcheck::run_suite;
use sketchnet::strategies::{synthesize_strategy_dataset, CompoundTable, Strategy, StrategyConfig};
use sketchnet::stroke::{parse_quickdraw_line, ClassTable};
use sketchnet::train::TrainReport;
use sketchnet::{adapt_specialist, train, ArchitectureSpec, EnsembleBundle, ModelState, Predictor, TrainConfig};

use crate::server::{serve, AppState};

#[derive(Debug, Parser)]
#[command(name = "sketchnet", version, about = "Sketch classifier training, evaluation and game server")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON file overriding default hyperparameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read Quick Draw NDJSON files into a dataset cache.
    Ingest {
        /// An `.ndjson` file or a directory of them.
        #[arg(long)]
        ndjson: PathBuf,
        /// One class name per line.
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a baseline on the train split of a clean dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the held-out test split as a dataset cache.
        #[arg(long)]
        test_out: Option<PathBuf>,
        /// Per-epoch JSON lines.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Fine-tune a copy of a baseline on one strategy's data.
    Adapt {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Generate a strategy dataset from clean sketches.
    Transform {
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of output sketches; defaults to the input size.
        #[arg(long)]
        count: Option<usize>,
        /// Compound table, required for rebus.
        #[arg(long)]
        compounds: Option<PathBuf>,
        /// Class table, required for rebus.
        #[arg(long)]
        classes: Option<PathBuf>,
        #[arg(long)]
        min_lines: Option<usize>,
        #[arg(long)]
        max_lines: Option<usize>,
        #[arg(long)]
        dash_length: Option<f64>,
        #[arg(long)]
        gap_length: Option<f64>,
        /// Randomize the dash phase per sketch.
        #[arg(long)]
        random_phase: bool,
    },
    /// Evaluate every bundle member and the ensemble on every dataset.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        datasets: Vec<PathBuf>,
        /// Checkpoints per member to average over.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Host game rounds over WebSocket.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory served under `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        cadence_ms: Option<u64>,
        #[arg(long)]
        round_seconds: Option<u64>,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck,
}

#[derive(Debug, clap::Args)]
struct TrainOverrides {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
}

/// Contents of `--config`. Every section is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: Option<TrainConfig>,
    pub spec: Option<ArchitectureSpec>,
    pub strategies: Option<StrategyConfig>,
    pub cadence_seconds: Option<f64>,
    pub round_seconds: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<sketchnet::Error> for Failure {
    fn from(e: sketchnet::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
            eprintln!("{line}");
            return 1;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
}

fn execute(cli: Cli) -> CliResult<()> {
    let config = load_config(cli.config.as_deref())?;
    let seed = cli.seed;
    match cli.command {
        Command::Ingest { ndjson, classes, out } => ingest(&ndjson, &classes, &out),
        Command::Train {
            data,
            out,
            test_out,
            report,
            overrides,
        } => train_baseline(&config, seed, &data, &out, test_out.as_deref(), report.as_deref(), &overrides),
        Command::Adapt {
            baseline,
            strategy,
            data,
            out,
            report,
            overrides,
        } => adapt(&config, seed, &baseline, strategy, &data, &out, report.as_deref(), &overrides),
        Command::Transform {
            strategy,
            input,
            out,
            count,
            compounds,
            classes,
            min_lines,
            max_lines,
            dash_length,
            gap_length,
            random_phase,
        } => {
            let mut cfg = config.strategies.clone().unwrap_or_default();
            if let Some(v) = min_lines {
                cfg.distraction.min_lines = v;
            }
            if let Some(v) = max_lines {
                cfg.distraction.max_lines = v;
            }
            if let Some(v) = dash_length {
                cfg.dotted.dash_length = v;
            }
            if let Some(v) = gap_length {
                cfg.dotted.gap_length = v;
            }
            cfg.random_phase |= random_phase;
            transform(seed, strategy, &cfg, &input, &out, count, compounds.as_deref(), classes.as_deref())
        }
        Command::Eval {
            bundle,
            datasets,
            repeats,
            csv,
        } => eval(&bundle, &datasets, repeats, csv.as_deref()),
        Command::Serve {
            bundle,
            classes,
            addr,
            static_dir,
            cadence_ms,
            round_seconds,
        } => {
            let mut round = RoundConfig::default();
            if let Some(s) = config.cadence_seconds {
                round.cadence = Duration::from_secs_f64(s);
            }
            if let Some(s) = config.round_seconds {
                round.round_time = Duration::from_secs_f64(s);
            }
            if let Some(ms) = cadence_ms {
                round.cadence = Duration::from_millis(ms);
            }
            if let Some(s) = round_seconds {
                round.round_time = Duration::from_secs(s);
            }
            serve_command(seed, &bundle, &classes, addr, static_dir, round)
        }
        Command::Gradcheck => gradcheck(seed),
    }
}

fn ndjson_files(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Runtime(format!("no .ndjson files in {}", path.display())));
    }
    Ok(files)
}

fn ingest(ndjson: &Path, classes: &Path, out: &Path) -> CliResult<()> {
    let table = ClassTable::load(classes)?;
    let mut sketches = Vec::new();
    let mut skipped = 0usize;
    for file in ndjson_files(ndjson)? {
        let reader = BufReader::new(fs::File::open(&file)?);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match parse_quickdraw_line(&line, &table) {
                Ok(s) => sketches.push(s),
                Err(sketchnet::Error::UnknownClass(_)) => skipped += 1,
                Err(e) => return Err(Failure::Runtime(format!("{}:{}: {e}", file.display(), n + 1))),
            }
        }
    }
    let count = sketches.len();
    Dataset::new(table.len(), DatasetTag::Clean, sketches)?.save(out)?;
    println!("ingested {count} sketches ({skipped} with classes outside the table skipped)");
    Ok(())
}

fn train_config(config: &FileConfig, seed: u64, o: &TrainOverrides) -> CliResult<TrainConfig> {
    let mut c = config.train.clone().unwrap_or_default();
    c.seed = seed;
    if let Some(v) = o.epochs {
        c.max_epochs = v;
    }
    if let Some(v) = o.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = o.learning_rate {
        c.learning_rate = v;
    }
    if let Some(v) = o.patience {
        c.patience = v;
    }
    c.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(c)
}

fn metadata(report: &TrainReport) -> TrainingMetadata {
    TrainingMetadata {
        epoch: report.best_epoch.unwrap_or(0) as u64,
        best_validation_loss: report.best().map(|e| e.validation_loss),
    }
}

fn write_report(path: Option<&Path>, report: &TrainReport) -> CliResult<()> {
    if let Some(p) = path {
        fs::write(p, report.to_jsonl()?)?;
    }
    Ok(())
}

fn summary(report: &TrainReport) -> String {
    match report.best() {
        Some(b) => format!(
            "{} epochs, best epoch {} (validation loss {:.4}, top-1 {:.2}%)",
            report.epochs.len(),
            b.epoch,
            b.validation_loss,
            b.validation_top1
        ),
        None => "no epochs run".into(),
    }
}

fn train_baseline(
    config: &FileConfig,
    seed: u64,
    data: &Path,
    out: &Path,
    test_out: Option<&Path>,
    report_path: Option<&Path>,
    overrides: &TrainOverrides,
) -> CliResult<()> {
    let cfg = train_config(config, seed, overrides)?;
    let dataset = Dataset::load(data)?;
    let spec = config
        .spec
        .clone()
        .unwrap_or_else(|| ArchitectureSpec::desk_scale(dataset.class_count));
    if spec.class_count != dataset.class_count {
        return Err(Failure::Usage(format!(
            "spec has {} classes, dataset has {}",
            spec.class_count, dataset.class_count
        )));
    }
    let split = split_dataset(&dataset.sketches, 0.1, 0.1, seed)?;
    let initial = ModelState::build(&spec, seed)?;
    let (model, report) = train(&initial, &encode_all(&split.train)?, &encode_all(&split.validation)?, &cfg)?;
    save_checkpoint(out, &model, &metadata(&report))?;
    if let Some(p) = test_out {
        Dataset::new(dataset.class_count, dataset.tag, split.test)?.save(p)?;
    }
    write_report(report_path, &report)?;
    println!("{}", summary(&report));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    config: &FileConfig,
    seed: u64,
    baseline: &Path,
    strategy: Strategy,
    data: &Path,
    out: &Path,
    report_path: Option<&Path>,
    overrides: &TrainOverrides,
) -> CliResult<()> {
    let cfg = train_config(config, seed, overrides)?;
    let base = load_checkpoint(baseline)?.model;
    let dataset = Dataset::load(data)?;
    if dataset.tag != strategy.tag() {
        return Err(Failure::Usage(format!(
            "{} holds {} sketches, not {}",
            data.display(),
            dataset.tag.name(),
            strategy.name()
        )));
    }
    if dataset.class_count != base.class_count() {
        return Err(Failure::Runtime(format!(
            "dataset has {} classes, baseline has {}",
            dataset.class_count,
            base.class_count()
        )));
    }
    let split = split_dataset(&dataset.sketches, 0.1, 0.1, seed)?;
    let (model, report) = adapt_specialist(&base, &encode_all(&split.train)?, &encode_all(&split.validation)?, &cfg)?;
    save_checkpoint(out, &model, &metadata(&report))?;
    write_report(report_path, &report)?;
    println!("{}", summary(&report));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn transform(
    seed: u64,
    strategy: Strategy,
    cfg: &StrategyConfig,
    input: &Path,
    out: &Path,
    count: Option<usize>,
    compounds: Option<&Path>,
    classes: Option<&Path>,
) -> CliResult<()> {
    cfg.distraction.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    cfg.dotted.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let dataset = Dataset::load(input)?;
    let resolved = match strategy {
        Strategy::Rebus => {
            let (Some(c), Some(t)) = (compounds, classes) else {
                return Err(Failure::Usage("rebus needs --compounds and --classes".into()));
            };
            let table = ClassTable::load(t)?;
            if table.len() != dataset.class_count {
                return Err(Failure::Runtime(format!(
                    "class table has {} names, dataset has {} classes",
                    table.len(),
                    dataset.class_count
                )));
            }
            CompoundTable::load(c)?.resolve(&table)?
        }
        _ => Vec::new(),
    };
    let n = count.unwrap_or(dataset.sketches.len());
    let sketches = synthesize_strategy_dataset(&dataset.sketches, strategy, cfg, &resolved, n, seed)?;
    Dataset::new(dataset.class_count, strategy.tag(), sketches)?.save(out)?;
    println!("wrote {n} {} sketches", strategy.name());
    Ok(())
}

fn eval(bundle: &Path, datasets: &[PathBuf], repeats: usize, csv: Option<&Path>) -> CliResult<()> {
    if repeats == 0 {
        return Err(Failure::Usage("--repeats must be at least 1".into()));
    }
    let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(bundle)?)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", bundle.display())))?;
    if manifest.repeats() < repeats {
        return Err(Failure::Runtime(format!(
            "bundle has {} checkpoints per member, {repeats} repeats requested",
            manifest.repeats()
        )));
    }
    let base = bundle.parent().unwrap_or(Path::new("."));
    let bundles: Vec<EnsembleBundle> = (0..repeats).map(|r| manifest.load_repeat(base, r)).collect::<Result<_, _>>()?;

    let mut loaded = Vec::with_capacity(datasets.len());
    for path in datasets {
        let d = Dataset::load(path)?;
        if d.class_count != bundles[0].class_count() {
            return Err(Failure::Runtime(format!(
                "{} has {} classes, bundle has {}",
                path.display(),
                d.class_count,
                bundles[0].class_count()
            )));
        }
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        loaded.push((name, encode_all(&d.sketches)?));
    }

    let mut models: Vec<GridModel> = manifest
        .members
        .iter()
        .enumerate()
        .map(|(i, m)| GridModel {
            name: m.name.clone(),
            repeats: bundles.iter().map(|b| &b.members()[i].model as &dyn Predictor).collect(),
        })
        .collect();
    models.push(GridModel {
        name: "ensemble".into(),
        repeats: bundles.iter().map(|b| b as &dyn Predictor).collect(),
    });
    let grid: Vec<GridDataset> = loaded
        .iter()
        .map(|(name, data)| GridDataset {
            name: name.clone(),
            repeats: vec![data.as_slice()],
        })
        .collect();
    let rows = evaluate_grid(&models, &grid)?;
    print!("{}", to_text(&rows));
    if let Some(p) = csv {
        fs::write(p, to_csv(&rows))?;
    }
    Ok(())
}

fn serve_command(
    seed: u64,
    bundle: &Path,
    classes: &Path,
    addr: SocketAddr,
    static_dir: Option<PathBuf>,
    round: RoundConfig,
) -> CliResult<()> {
    let bundle = EnsembleBundle::load_manifest(bundle)?;
    let table = ClassTable::load(classes)?;
    if table.len() != bundle.class_count() {
        return Err(Failure::Runtime(format!(
            "class table has {} names, bundle has {} classes",
            table.len(),
            bundle.class_count()
        )));
    }
    let state = AppState::new(Arc::new(bundle), Arc::new(table), round, seed);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve(addr, state, static_dir))?;
    Ok(())
}

fn gradcheck(seed: u64) -> CliResult<()> {
    let reports = run_suite(seed)?;
    let mut failed = 0;
    for r in &reports {
        println!(
            "{:<26} {} checked {:>4}  max rel err {:.2e}  (tol {:.0e})",
            r.target,
            if r.passed() { "ok  " } else { "FAIL" },
            r.checked,
            r.max_relative_error,
            r.tolerance
        );
        failed += usize::from(!r.passed());
    }
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} gradient checks failed")));
    }
    Ok(())
}
