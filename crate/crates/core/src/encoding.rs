//! Feature encoding: one-hot activity label augmented with the elapsed time
//! since the previous event, paired k-prefix extraction, and z-scoring of the
//! time channel.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::{EventLog, Trace, Vocabulary};

/// Minimum standard deviation of the time channel, in seconds.
pub const MIN_TIME_STD: f64 = 1.0;

const DATASET_MAGIC: &str = "nextevent-dataset";
const DATASET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("activity {0:?} is not in the vocabulary")]
    UnknownActivity(String),
    #[error("no prefixes of length {k}; the longest usable length is {max_usable}")]
    NoPairs { k: usize, max_usable: usize },
    #[error("prefix length must be at least 1")]
    ZeroK,
    #[error("cannot fit a time scaler without any observed delta")]
    NoDeltas,
    #[error("dataset file, line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One encoded event: `|E|` one-hot label slots followed by the time channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn one_hot(label_index: usize, label_count: usize, time: f64) -> Self {
        let mut values = vec![0.0; label_count + 1];
        values[label_index] = 1.0;
        values[label_count] = time;
        Self { values }
    }

    /// Wraps a raw `m`-dimensional vector. The label part is not validated.
    pub fn from_values(values: Vec<f64>) -> Self {
        assert!(
            values.len() >= 2,
            "feature vector needs a label and a time slot"
        );
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn label_part(&self) -> &[f64] {
        &self.values[..self.values.len() - 1]
    }

    pub fn time(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn set_time(&mut self, t: f64) {
        let last = self.values.len() - 1;
        self.values[last] = t;
    }

    /// Index of the hot slot, or `None` if the label part is not one-hot.
    pub fn label_index(&self) -> Option<usize> {
        let labels = self.label_part();
        let mut hot = None;
        for (i, &v) in labels.iter().enumerate() {
            if v == 1.0 {
                if hot.is_some() {
                    return None;
                }
                hot = Some(i);
            } else if v != 0.0 {
                return None;
            }
        }
        hot
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// z-score transform for the time channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScaler {
    pub mean: f64,
    pub std: f64,
}

impl TimeScaler {
    /// Pass-through scaler (standardization disabled).
    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
        }
    }

    /// Population mean and standard deviation; the deviation is floored at [`MIN_TIME_STD`].
    pub fn fit(deltas: &[f64]) -> Result<Self, EncodingError> {
        if deltas.is_empty() {
            return Err(EncodingError::NoDeltas);
        }
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let mut std = var.sqrt();
        if std < MIN_TIME_STD {
            log::warn!("time channel std {std} s below floor, using {MIN_TIME_STD} s");
            std = MIN_TIME_STD;
        }
        Ok(Self { mean, std })
    }

    /// Fits on the per-event deltas of every trace (end markers excluded).
    pub fn fit_log(log: &EventLog) -> Result<Self, EncodingError> {
        let deltas: Vec<f64> = log.traces.iter().flat_map(Trace::deltas).collect();
        Self::fit(&deltas)
    }

    pub fn apply(&self, seconds: f64) -> f64 {
        (seconds - self.mean) / self.std
    }

    pub fn invert(&self, standardized: f64) -> f64 {
        standardized * self.std + self.mean
    }
}

/// Encodes a trace as `|trace| + 1` vectors (events, then the end marker) with
/// raw time deltas in seconds.
pub fn encode_trace(
    trace: &Trace,
    vocab: &Vocabulary,
) -> Result<Vec<FeatureVector>, EncodingError> {
    let label_count = vocab.len();
    let deltas = trace.deltas();
    let mut out = Vec::with_capacity(trace.len() + 1);
    for (event, delta) in trace.events.iter().zip(deltas) {
        let idx = vocab
            .index_of(&event.activity)
            .ok_or_else(|| EncodingError::UnknownActivity(event.activity.clone()))?;
        out.push(FeatureVector::one_hot(idx, label_count, delta));
    }
    out.push(FeatureVector::one_hot(vocab.end_index(), label_count, 0.0));
    Ok(out)
}

/// An input window and its one-step-ahead targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixPair {
    pub inputs: Vec<FeatureVector>,
    pub targets: Vec<FeatureVector>,
}

impl PrefixPair {
    pub fn k(&self) -> usize {
        self.inputs.len()
    }

    /// Ground truth following the last input.
    pub fn last_target(&self) -> &FeatureVector {
        self.targets.last().expect("non-empty prefix")
    }
}

/// Slides a width-`k` window over the event positions of an encoded trace.
/// The trailing end-marker vector only ever appears as a target.
pub fn extract_k_prefixes(encoded: &[FeatureVector], k: usize) -> Vec<PrefixPair> {
    if k == 0 || encoded.len() < k + 1 {
        return Vec::new();
    }
    let events = encoded.len() - 1;
    (0..=events - k)
        .map(|i| PrefixPair {
            inputs: encoded[i..i + k].to_vec(),
            targets: encoded[i + 1..i + k + 1].to_vec(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefixDataset {
    pub k: usize,
    pub pairs: Vec<PrefixPair>,
    pub scaler: TimeScaler,
    pub vocabulary: Vocabulary,
}

impl PrefixDataset {
    /// Feature dimension `m = |E| + 1`.
    pub fn dim(&self) -> usize {
        self.vocabulary.len() + 1
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Writes the versioned flat-file form: a text header followed by one
    /// row per pair (inputs then targets, row-major).
    pub fn export<W: Write>(&self, mut w: W) -> Result<(), EncodingError> {
        writeln!(w, "{DATASET_MAGIC} v{DATASET_VERSION}")?;
        writeln!(w, "k {}", self.k)?;
        writeln!(w, "m {}", self.dim())?;
        let vocab = serde_json::to_string(self.vocabulary.labels()).expect("labels serialize");
        writeln!(w, "vocabulary {vocab}")?;
        writeln!(w, "scaler {} {}", self.scaler.mean, self.scaler.std)?;
        writeln!(w, "pairs {}", self.pairs.len())?;
        let mut row = String::new();
        for pair in &self.pairs {
            row.clear();
            for v in pair.inputs.iter().chain(&pair.targets) {
                for x in v.as_slice() {
                    if !row.is_empty() {
                        row.push(' ');
                    }
                    row.push_str(&x.to_string());
                }
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn import<R: BufRead>(r: R) -> Result<Self, EncodingError> {
        let mut lines = r.lines().enumerate();
        let mut next = |want: &str| -> Result<(usize, String), EncodingError> {
            match lines.next() {
                Some((i, line)) => {
                    let line = line?;
                    let rest = line
                        .strip_prefix(want)
                        .map(|s| s.trim().to_string())
                        .ok_or_else(|| EncodingError::Format {
                            line: i + 1,
                            message: format!("expected {want:?}"),
                        })?;
                    Ok((i + 1, rest))
                }
                None => Err(EncodingError::Format {
                    line: 0,
                    message: format!("unexpected end of file, expected {want:?}"),
                }),
            }
        };
        let bad = |line: usize, message: &str| EncodingError::Format {
            line,
            message: message.to_string(),
        };

        let (ln, version) = next(DATASET_MAGIC)?;
        if version != format!("v{DATASET_VERSION}") {
            return Err(bad(ln, "unsupported dataset version"));
        }
        let (ln, k) = next("k ")?;
        let k: usize = k.parse().map_err(|_| bad(ln, "bad k"))?;
        let (ln, m) = next("m ")?;
        let m: usize = m.parse().map_err(|_| bad(ln, "bad m"))?;
        let (ln, vocab) = next("vocabulary ")?;
        let labels: Vec<String> =
            serde_json::from_str(&vocab).map_err(|_| bad(ln, "bad vocabulary"))?;
        let vocabulary =
            Vocabulary::from_labels(labels).ok_or_else(|| bad(ln, "invalid vocabulary"))?;
        if vocabulary.len() + 1 != m {
            return Err(bad(ln, "vocabulary size disagrees with m"));
        }
        let (ln, scaler) = next("scaler ")?;
        let parts: Vec<f64> = scaler
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad(ln, "bad scaler"))?;
        let [mean, std] = parts[..] else {
            return Err(bad(ln, "scaler needs mean and std"));
        };
        let (ln, count) = next("pairs ")?;
        let count: usize = count.parse().map_err(|_| bad(ln, "bad pair count"))?;

        let mut pairs = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, row) = next("")?;
            let values: Vec<f64> = row
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| bad(ln, "bad number"))?;
            if values.len() != 2 * k * m {
                return Err(bad(ln, "row length disagrees with k and m"));
            }
            let mut vectors = values
                .chunks(m)
                .map(|c| FeatureVector::from_values(c.to_vec()));
            let inputs: Vec<_> = vectors.by_ref().take(k).collect();
            let targets: Vec<_> = vectors.collect();
            pairs.push(PrefixPair { inputs, targets });
        }
        Ok(Self {
            k,
            pairs,
            scaler: TimeScaler { mean, std },
            vocabulary,
        })
    }
}

/// Encodes every trace of `log`, standardizes time channels with `scaler`
/// (or one fitted on `log` when `None`) and collects all k-prefix pairs in
/// trace order, then window position.
pub fn build_dataset(
    log: &EventLog,
    k: usize,
    scaler: Option<&TimeScaler>,
) -> Result<PrefixDataset, EncodingError> {
    if k == 0 {
        return Err(EncodingError::ZeroK);
    }
    let scaler = match scaler {
        Some(s) => *s,
        None => TimeScaler::fit_log(log)?,
    };
    let mut pairs = Vec::new();
    for trace in &log.traces {
        let mut encoded = encode_trace(trace, &log.vocabulary)?;
        for v in &mut encoded {
            v.set_time(scaler.apply(v.time()));
        }
        pairs.extend(extract_k_prefixes(&encoded, k));
    }
    if pairs.is_empty() {
        return Err(EncodingError::NoPairs {
            k,
            max_usable: log.max_trace_len(),
        });
    }
    Ok(PrefixDataset {
        k,
        pairs,
        scaler,
        vocabulary: log.vocabulary.clone(),
    })
}
