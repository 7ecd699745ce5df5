//! Next-event metrics: per-k accuracy and MAE, prefix-count weighted
//! aggregation, and the train/evaluate sweep over prefix lengths.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversarial::{train, Generator, TrainError, TrainedModel, TrainingConfig};
use crate::encoding::{build_dataset, EncodingError, FeatureVector, PrefixDataset, TimeScaler};
use crate::event_log::{temporal_split, EventLog, LogError};
use crate::exec::{map_ordered, Execution};
use crate::neural::NeuralError;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Prefix lengths swept by default.
pub const DEFAULT_KS: [usize; 13] = [2, 4, 6, 8, 10, 15, 20, 25, 30, 35, 40, 45, 50];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set for k={0} is empty")]
    EmptyTest(usize),
    #[error("prefix length {got} does not match the model's k={expected}")]
    KMismatch { expected: usize, got: usize },
    #[error("no feasible prefix length among {0:?}")]
    NoFeasibleK(Vec<usize>),
    #[error("no prefix lengths requested")]
    NoKs,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub k: usize,
    pub predicted_label: usize,
    pub true_label: usize,
    pub predicted_delta_secs: f64,
    pub true_delta_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub k: usize,
    pub n: usize,
    pub accuracy: f64,
    pub mae_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_k: Vec<KMetrics>,
    pub weighted_accuracy: f64,
    pub weighted_mae_days: f64,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicted label index and delta in seconds for the observation following `prefix`.
pub fn predict_next(
    gen: &Generator,
    prefix: &[FeatureVector],
    scaler: &TimeScaler,
) -> Result<(usize, f64), NeuralError> {
    let (outputs, _) = gen.network.forward(prefix)?;
    let last = outputs.last().ok_or(NeuralError::Length {
        expected: 1,
        got: 0,
    })?;
    let labels = last.len() - 1;
    Ok((argmax(&last[..labels]), scaler.invert(last[labels])))
}

/// Accuracy and MAE (days) over a set of predictions.
pub fn score_predictions(k: usize, records: &[PredictionRecord]) -> Result<KMetrics, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyTest(k));
    }
    let n = records.len();
    let correct = records
        .iter()
        .filter(|r| r.predicted_label == r.true_label)
        .count();
    let abs_secs: f64 = records
        .iter()
        .map(|r| (r.predicted_delta_secs - r.true_delta_secs).abs())
        .sum();
    Ok(KMetrics {
        k,
        n,
        accuracy: correct as f64 / n as f64,
        mae_days: abs_secs / n as f64 / SECONDS_PER_DAY,
    })
}

/// Predictions for the final position of every test pair.
pub fn predict_dataset(
    gen: &Generator,
    test: &PrefixDataset,
    exec: Execution,
) -> Result<Vec<PredictionRecord>, NeuralError> {
    map_ordered(exec, &test.pairs, |pair| {
        let (label, delta) = predict_next(gen, &pair.inputs, &test.scaler)?;
        let truth = pair.last_target();
        Ok(PredictionRecord {
            k: test.k,
            predicted_label: label,
            true_label: truth
                .label_index()
                .unwrap_or_else(|| argmax(truth.label_part())),
            predicted_delta_secs: delta,
            true_delta_secs: test.scaler.invert(truth.time()),
        })
    })
    .into_iter()
    .collect()
}

pub fn evaluate_k(
    gen: &Generator,
    test: &PrefixDataset,
    exec: Execution,
) -> Result<KMetrics, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTest(test.k));
    }
    let records = predict_dataset(gen, test, exec)?;
    score_predictions(test.k, &records)
}

/// `Σ wᵢ vᵢ / Σ wᵢ`
pub fn weighted_average(values: &[(f64, usize)]) -> f64 {
    let total: usize = values.iter().map(|(_, w)| w).sum();
    let sum: f64 = values.iter().map(|(v, w)| v * *w as f64).sum();
    sum / total as f64
}

impl EvalReport {
    /// Aggregates per-k metrics weighted by their test-prefix counts.
    pub fn from_metrics(per_k: Vec<KMetrics>) -> Result<Self, EvalError> {
        if per_k.is_empty() {
            return Err(EvalError::NoKs);
        }
        let acc: Vec<(f64, usize)> = per_k.iter().map(|m| (m.accuracy, m.n)).collect();
        let mae: Vec<(f64, usize)> = per_k.iter().map(|m| (m.mae_days, m.n)).collect();
        Ok(Self {
            weighted_accuracy: weighted_average(&acc),
            weighted_mae_days: weighted_average(&mae),
            per_k,
        })
    }

    pub fn total_prefixes(&self) -> usize {
        self.per_k.iter().map(|m| m.n).sum()
    }

    /// Columns `k,n,accuracy,mae_days`: one row per k, then a `weighted` row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,n,accuracy,mae_days")?;
        for m in &self.per_k {
            writeln!(w, "{},{},{},{}", m.k, m.n, m.accuracy, m.mae_days)?;
        }
        writeln!(
            w,
            "weighted,{},{},{}",
            self.total_prefixes(),
            self.weighted_accuracy,
            self.weighted_mae_days
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Training and test datasets for one prefix length; `None` if either is empty.
pub fn datasets_for_k(
    train_log: &EventLog,
    test_log: &EventLog,
    k: usize,
    scaler: &TimeScaler,
) -> Result<Option<(PrefixDataset, PrefixDataset)>, EncodingError> {
    let train = match build_dataset(train_log, k, Some(scaler)) {
        Ok(d) => d,
        Err(EncodingError::NoPairs { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let test = match build_dataset(test_log, k, Some(scaler)) {
        Ok(d) => d,
        Err(EncodingError::NoPairs { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some((train, test)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub train_fraction: f64,
    pub standardize_time: bool,
    /// Upper bound on concurrently trained k values.
    pub jobs: usize,
    pub training: TrainingConfig,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            standardize_time: true,
            jobs: 1,
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub k: usize,
    pub model: TrainedModel,
    pub metrics: KMetrics,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: EvalReport,
    pub runs: Vec<SweepRun>,
    pub scaler: TimeScaler,
    pub skipped: Vec<usize>,
}

/// Scaler fitted on the training half, or identity when standardization is off.
pub fn time_scaler(train_log: &EventLog, standardize: bool) -> Result<TimeScaler, EncodingError> {
    if standardize {
        TimeScaler::fit_log(train_log)
    } else {
        Ok(TimeScaler::identity())
    }
}

/// Splits `log`, then trains and evaluates one model per feasible `k`.
/// Infeasible lengths are skipped with a notice.
pub fn sweep(log: &EventLog, ks: &[usize], opts: &SweepOptions) -> Result<SweepOutcome, EvalError> {
    if ks.is_empty() {
        return Err(EvalError::NoKs);
    }
    opts.training.validate()?;
    let (train_log, test_log) = temporal_split(log, opts.train_fraction)?;
    let scaler = time_scaler(&train_log, opts.standardize_time)?;

    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for &k in ks {
        match datasets_for_k(&train_log, &test_log, k, &scaler)? {
            Some(ds) => jobs.push((k, ds)),
            None => {
                log::info!("skipping k={k}: no prefixes of that length in both halves");
                skipped.push(k);
            }
        }
    }
    if jobs.is_empty() {
        return Err(EvalError::NoFeasibleK(ks.to_vec()));
    }

    let runs = run_bounded(
        opts.jobs,
        &jobs,
        |(k, (train_ds, test_ds))| -> Result<SweepRun, EvalError> {
            let model = train(train_ds, &opts.training)?;
            let metrics = evaluate_k(&model.generator, test_ds, opts.training.execution)?;
            log::info!(
                "k={k}: accuracy {:.4}, mae {:.4} days",
                metrics.accuracy,
                metrics.mae_days
            );
            Ok(SweepRun {
                k: *k,
                model,
                metrics,
            })
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let report = EvalReport::from_metrics(runs.iter().map(|r| r.metrics.clone()).collect())?;
    Ok(SweepOutcome {
        report,
        runs,
        scaler,
        skipped,
    })
}

/// Maps `f` over `items` on at most `jobs` worker threads, keeping input order.
pub fn run_bounded<T, R, F>(jobs: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = jobs.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}
