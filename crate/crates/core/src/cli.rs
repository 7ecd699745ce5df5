//! Command-line front end: `stats`, `train` and `evaluate`.
//!
//! Every command resolves and validates its configuration, parses the log
//! and checks feasibility before it writes anything. Artifacts are only
//! written once all training or scoring for the run has finished.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversarial::{train, Generator, Mode, TrainingConfig};
use crate::encoding::{PrefixDataset, TimeScaler};
use crate::eval::{
    datasets_for_k, evaluate_k, run_bounded, time_scaler, EvalReport, KMetrics, DEFAULT_KS,
};
use crate::event_log::{compute_stats, parse_csv, temporal_split, CsvSchema, EventLog};
use crate::neural::Checkpoint;

/// Overrides `output_dir` from the config file when set.
pub const OUTPUT_ROOT_ENV: &str = "NEXTEVENT_OUTPUT_ROOT";

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn invalid(msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(msg.to_string())
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "nextevent",
    version,
    about = "Next-event prediction on process event logs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print descriptive statistics of an event log.
    Stats {
        log: PathBuf,
        /// Run config whose `[schema]` table describes the CSV columns.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one model per prefix length and write checkpoints.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score checkpoints on the held-out split and write the report.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Directory holding `k{K}/checkpoint.json`; defaults to the output directory.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub no_standardize_time: bool,
}

/// Run configuration as read from TOML. Relative paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub ks: Vec<usize>,
    pub train_fraction: f64,
    pub standardize_time: bool,
    pub jobs: usize,
    pub schema: CsvSchema,
    pub training: TrainingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            output_dir: PathBuf::from("out"),
            ks: DEFAULT_KS.to_vec(),
            train_fraction: 0.8,
            standardize_time: true,
            jobs: 1,
            schema: CsvSchema::default(),
            training: TrainingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(invalid)
    }

    /// Reads `path`, applies flag and environment overrides, resolves paths
    /// and validates.
    pub fn load(args: &RunArgs, output_root: Option<PathBuf>) -> Result<Self, CliError> {
        let text = fs::read_to_string(&args.config)
            .map_err(|e| invalid(format!("{}: {e}", args.config.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(seed) = args.seed {
            cfg.training.seed = seed;
        }
        if let Some(mode) = args.mode {
            cfg.training.mode = mode;
        }
        if let Some(jobs) = args.jobs {
            cfg.jobs = jobs;
        }
        if args.no_standardize_time {
            cfg.standardize_time = false;
        }
        if let Some(root) = output_root {
            cfg.output_dir = root;
        }
        let base = args.config.parent().unwrap_or(Path::new(""));
        cfg.input = base.join(&cfg.input);
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.input.as_os_str().is_empty() {
            return Err(invalid("`input` is required"));
        }
        if !self.input.is_file() {
            return Err(invalid(format!(
                "input {} is not a readable file",
                self.input.display()
            )));
        }
        if self.ks.is_empty() {
            return Err(invalid("`ks` is empty"));
        }
        if self.ks.contains(&0) {
            return Err(invalid("prefix lengths must be positive"));
        }
        let mut sorted = self.ks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.ks.len() {
            return Err(invalid("`ks` contains duplicates"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.jobs == 0 {
            return Err(invalid("`jobs` must be at least 1"));
        }
        if self.output_dir.is_file() {
            return Err(invalid(format!(
                "output_dir {} is a file",
                self.output_dir.display()
            )));
        }
        self.training.validate().map_err(invalid)
    }

    pub fn k_dir(&self, root: &Path, k: usize) -> PathBuf {
        root.join(format!("k{k}"))
    }
}

/// Log, split and per-k datasets, all checked before any work.
struct Prepared {
    log: EventLog,
    scaler: TimeScaler,
    datasets: Vec<(usize, PrefixDataset, PrefixDataset)>,
}

fn read_log(path: &Path, schema: &CsvSchema) -> Result<EventLog, CliError> {
    let file = File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse_csv(io::BufReader::new(file), schema)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn prepare(cfg: &RunConfig, scaler: Option<TimeScaler>) -> Result<Prepared, CliError> {
    let log = read_log(&cfg.input, &cfg.schema)?;
    let (train_log, test_log) = temporal_split(&log, cfg.train_fraction).map_err(invalid)?;
    let scaler = match scaler {
        Some(s) => s,
        None => time_scaler(&train_log, cfg.standardize_time).map_err(invalid)?,
    };
    let mut datasets = Vec::new();
    for &k in &cfg.ks {
        match datasets_for_k(&train_log, &test_log, k, &scaler).map_err(invalid)? {
            Some((tr, te)) => datasets.push((k, tr, te)),
            None => log::warn!("skipping k={k}: no prefixes of that length in both splits"),
        }
    }
    if datasets.is_empty() {
        return Err(invalid(format!(
            "no feasible prefix length among {:?}",
            cfg.ks
        )));
    }
    Ok(Prepared {
        log,
        scaler,
        datasets,
    })
}

/// Writes `bytes` next to `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| runtime(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

pub fn cmd_stats<W: Write>(
    log_path: &Path,
    schema: &CsvSchema,
    out: &mut W,
) -> Result<(), CliError> {
    let log = read_log(log_path, schema)?;
    let stats = compute_stats(&log);
    writeln!(out, "{stats}").map_err(runtime)
}

/// Per-k artifacts written by `train`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub trained: Vec<usize>,
    pub output_dir: PathBuf,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    let prep = prepare(cfg, None)?;
    let results = run_bounded(cfg.jobs, &prep.datasets, |(k, train_ds, _)| {
        log::info!("training k={k} on {} prefixes", train_ds.len());
        train(train_ds, &cfg.training).map(|m| (*k, m))
    });
    let models = results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime)?;

    create_dir(&cfg.output_dir)?;
    for (k, model) in &models {
        let dir = cfg.k_dir(&cfg.output_dir, *k);
        create_dir(&dir)?;
        let ck = Checkpoint::new(
            *k,
            prep.log.vocabulary.clone(),
            prep.scaler,
            model.generator.network.clone(),
        );
        let mut bytes = Vec::new();
        ck.write(&mut bytes).map_err(runtime)?;
        write_atomic(&dir.join(CHECKPOINT_FILE), &bytes)?;
        let mut csv = Vec::new();
        model.trace.write_csv(&mut csv).map_err(runtime)?;
        write_atomic(&dir.join(CONVERGENCE_FILE), &csv)?;
    }
    Ok(TrainSummary {
        trained: models.iter().map(|(k, _)| *k).collect(),
        output_dir: cfg.output_dir.clone(),
    })
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let file = File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Checkpoint::read(io::BufReader::new(file))
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn cmd_evaluate(cfg: &RunConfig, checkpoints: Option<&Path>) -> Result<EvalReport, CliError> {
    let root = checkpoints.unwrap_or(&cfg.output_dir);
    let log = read_log(&cfg.input, &cfg.schema)?;

    let mut loaded = Vec::new();
    let mut scaler: Option<TimeScaler> = None;
    for &k in &cfg.ks {
        let path = cfg.k_dir(root, k).join(CHECKPOINT_FILE);
        if !path.is_file() {
            log::warn!("no checkpoint for k={k} at {}", path.display());
            continue;
        }
        let ck = load_checkpoint(&path)?;
        if ck.k != k {
            return Err(invalid(format!(
                "{} holds k={}, expected k={k}",
                path.display(),
                ck.k
            )));
        }
        if ck.vocabulary != log.vocabulary {
            return Err(invalid(format!(
                "{}: vocabulary {:?} does not match the log's {:?}",
                path.display(),
                ck.vocabulary.labels(),
                log.vocabulary.labels()
            )));
        }
        match &scaler {
            Some(s) if *s != ck.scaler => {
                return Err(invalid(
                    "checkpoints were trained with different time scalers",
                ))
            }
            _ => scaler = Some(ck.scaler),
        }
        loaded.push((k, ck));
    }
    if loaded.is_empty() {
        return Err(invalid(format!(
            "no checkpoints for {:?} under {}",
            cfg.ks,
            root.display()
        )));
    }

    let prep = prepare(cfg, scaler)?;
    let mut jobs = Vec::new();
    for (k, ck) in loaded {
        match prep.datasets.iter().find(|(dk, _, _)| *dk == k) {
            Some((_, _, test)) => jobs.push((Generator::from_network(ck.network), test)),
            None => log::warn!("skipping checkpoint k={k}: no test prefixes"),
        }
    }
    if jobs.is_empty() {
        return Err(invalid("no checkpoint has a matching test set"));
    }
    let metrics = run_bounded(cfg.jobs, &jobs, |(gen, test)| {
        evaluate_k(gen, test, cfg.training.execution)
    })
    .into_iter()
    .collect::<Result<Vec<KMetrics>, _>>()
    .map_err(runtime)?;
    let report = EvalReport::from_metrics(metrics).map_err(runtime)?;

    create_dir(&cfg.output_dir)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(runtime)?;
    write_atomic(&cfg.output_dir.join(REPORT_CSV), &csv)?;
    write_atomic(
        &cfg.output_dir.join(REPORT_JSON),
        report.to_json().as_bytes(),
    )?;
    Ok(report)
}

fn output_root_from_env() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Stats { log, config } => {
            let schema = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                    RunConfig::from_toml(&text)?.schema
                }
                None => CsvSchema::default(),
            };
            cmd_stats(&log, &schema, &mut out)?;
        }
        Command::Train { run } => {
            let cfg = RunConfig::load(&run, output_root_from_env())?;
            let summary = cmd_train(&cfg)?;
            writeln!(
                out,
                "trained k={:?} into {}",
                summary.trained,
                summary.output_dir.display()
            )
            .map_err(runtime)?;
        }
        Command::Evaluate { run, checkpoints } => {
            let cfg = RunConfig::load(&run, output_root_from_env())?;
            let report = cmd_evaluate(&cfg, checkpoints.as_deref())?;
            report.write_csv(&mut out).map_err(runtime)?;
        }
    }
    out.flush().map_err(runtime)
}
