//! Event-log ingestion: CSV parsing, case grouping, descriptive statistics
//! and the chronological train/test split.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved vocabulary symbol marking the end of a trace.
pub const END_MARKER: &str = "<EOS>";

/// Default timestamp layout (ISO-8601 without zone).
pub const DEFAULT_TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: cannot parse timestamp {value:?} with format {format:?}")]
    Timestamp {
        line: u64,
        value: String,
        format: String,
    },
    #[error("missing column {0:?} in header")]
    MissingColumn(String),
    #[error("event log contains no traces")]
    Empty,
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("split of {traces} traces at fraction {fraction} leaves an empty half")]
    EmptySplit { traces: usize, fraction: f64 },
    #[error("activity label {0:?} collides with the reserved end marker")]
    ReservedLabel(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Column mapping and format options for CSV input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub case_column: String,
    pub activity_column: String,
    pub timestamp_column: String,
    pub timestamp_format: String,
    pub delimiter: char,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            case_column: "case_id".into(),
            activity_column: "activity".into(),
            timestamp_column: "timestamp".into(),
            timestamp_format: DEFAULT_TIMESTAMP_FORMAT.into(),
            delimiter: ',',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: NaiveDateTime,
}

/// Events of a single case, sorted by timestamp (stable for ties).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn start(&self) -> NaiveDateTime {
        self.events[0].timestamp
    }

    /// Seconds elapsed between each event and its predecessor; the first entry is 0.
    pub fn deltas(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.events.len());
        let mut prev: Option<NaiveDateTime> = None;
        for e in &self.events {
            out.push(match prev {
                Some(p) => seconds_between(p, e.timestamp),
                None => 0.0,
            });
            prev = Some(e.timestamp);
        }
        out
    }
}

pub(crate) fn seconds_between(from: NaiveDateTime, to: NaiveDateTime) -> f64 {
    (to - from).num_milliseconds() as f64 / 1000.0
}

/// Ordered label set. Activities come first in first-occurrence order, the
/// end marker is always last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    labels: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from activity labels; appends the end marker.
    pub fn from_activities<I, S>(activities: I) -> Result<Self, LogError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut labels: Vec<String> = Vec::new();
        for a in activities {
            let a = a.as_ref();
            if a == END_MARKER {
                return Err(LogError::ReservedLabel(a.to_string()));
            }
            if !labels.iter().any(|l| l == a) {
                labels.push(a.to_string());
            }
        }
        labels.push(END_MARKER.to_string());
        Ok(Self { labels })
    }

    /// Rebuilds a vocabulary from a full label list (end marker included, last).
    pub fn from_labels(labels: Vec<String>) -> Option<Self> {
        match labels.last() {
            Some(l) if l == END_MARKER => {}
            _ => return None,
        }
        let body = &labels[..labels.len() - 1];
        if body.iter().any(|l| l == END_MARKER) {
            return None;
        }
        for (i, l) in body.iter().enumerate() {
            if body[..i].contains(l) {
                return None;
            }
        }
        Some(Self { labels })
    }

    /// Size including the end marker.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn activity_count(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn end_index(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub vocabulary: Vocabulary,
}

impl EventLog {
    /// Builds a log from traces, deriving the vocabulary in first-occurrence order.
    pub fn from_traces(traces: Vec<Trace>) -> Result<Self, LogError> {
        if traces.is_empty() {
            return Err(LogError::Empty);
        }
        let vocabulary = Vocabulary::from_activities(
            traces
                .iter()
                .flat_map(|t| t.events.iter().map(|e| e.activity.as_str())),
        )?;
        Ok(Self { traces, vocabulary })
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn max_trace_len(&self) -> usize {
        self.traces.iter().map(Trace::len).max().unwrap_or(0)
    }
}

/// Descriptive statistics; delta figures are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogStats {
    pub trace_count: usize,
    pub event_count: usize,
    pub label_count: usize,
    pub max_trace_len: usize,
    pub min_trace_len: usize,
    pub avg_trace_len: f64,
    pub avg_delta_secs: f64,
    pub std_delta_secs: f64,
}

impl LogStats {
    pub fn avg_delta_days(&self) -> f64 {
        self.avg_delta_secs / 86_400.0
    }

    pub fn std_delta_days(&self) -> f64 {
        self.std_delta_secs / 86_400.0
    }
}

impl std::fmt::Display for LogStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "traces:          {}", self.trace_count)?;
        writeln!(f, "events:          {}", self.event_count)?;
        writeln!(f, "labels:          {}", self.label_count)?;
        writeln!(f, "max trace len:   {}", self.max_trace_len)?;
        writeln!(f, "min trace len:   {}", self.min_trace_len)?;
        writeln!(f, "avg trace len:   {:.2}", self.avg_trace_len)?;
        writeln!(f, "avg delta days:  {:.3}", self.avg_delta_days())?;
        write!(f, "std delta days:  {:.3}", self.std_delta_days())
    }
}

fn parse_timestamp(value: &str, format: &str) -> Option<NaiveDateTime> {
    let value = value.trim();
    if let Ok(t) = NaiveDateTime::parse_from_str(value, format) {
        return Some(t);
    }
    // Zone-aware formats normalize to UTC.
    DateTime::parse_from_str(value, format)
        .ok()
        .map(|t| t.naive_utc())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, LogError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| LogError::MissingColumn(name.to_string()))
}

/// Parses a CSV event log. Events are grouped by case (traces ordered by the
/// first appearance of their case id) and sorted by timestamp within a case.
pub fn parse_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<EventLog, LogError> {
    let delimiter = u8::try_from(schema.delimiter).map_err(|_| LogError::Malformed {
        line: 0,
        message: format!("delimiter {:?} is not a single byte", schema.delimiter),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let case_col = column(&headers, &schema.case_column)?;
    let act_col = column(&headers, &schema.activity_column)?;
    let ts_col = column(&headers, &schema.timestamp_column)?;

    let mut order: HashMap<String, usize> = HashMap::new();
    let mut traces: Vec<Trace> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            LogError::Malformed {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize, name: &str| -> Result<String, LogError> {
            record
                .get(idx)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| LogError::Malformed {
                    line,
                    message: format!("missing field {name:?}"),
                })
        };
        let case_id = field(case_col, &schema.case_column)?;
        let activity = field(act_col, &schema.activity_column)?;
        let raw_ts = field(ts_col, &schema.timestamp_column)?;
        if activity.is_empty() {
            return Err(LogError::Malformed {
                line,
                message: "empty activity label".into(),
            });
        }
        if activity == END_MARKER {
            return Err(LogError::ReservedLabel(activity));
        }
        let timestamp = parse_timestamp(&raw_ts, &schema.timestamp_format).ok_or_else(|| {
            LogError::Timestamp {
                line,
                value: raw_ts.clone(),
                format: schema.timestamp_format.clone(),
            }
        })?;
        let slot = *order.entry(case_id.clone()).or_insert_with(|| {
            traces.push(Trace {
                case_id: case_id.clone(),
                events: Vec::new(),
            });
            traces.len() - 1
        });
        traces[slot].events.push(Event {
            case_id,
            activity,
            timestamp,
        });
    }
    for t in &mut traces {
        // stable: ties keep file order
        t.events.sort_by_key(|e| e.timestamp);
    }
    EventLog::from_traces(traces)
}

/// Writes the log back as CSV using the schema's columns and timestamp format.
pub fn write_csv<W: Write>(log: &EventLog, sink: W, schema: &CsvSchema) -> Result<(), LogError> {
    let delimiter = u8::try_from(schema.delimiter).map_err(|_| LogError::Malformed {
        line: 0,
        message: format!("delimiter {:?} is not a single byte", schema.delimiter),
    })?;
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(sink);
    writer.write_record([
        &schema.case_column,
        &schema.activity_column,
        &schema.timestamp_column,
    ])?;
    for trace in &log.traces {
        for e in &trace.events {
            let ts = e.timestamp.format(&schema.timestamp_format).to_string();
            writer.write_record([e.case_id.as_str(), e.activity.as_str(), ts.as_str()])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Counts and inter-event delta statistics. Deltas are taken over consecutive
/// same-trace event pairs; a log without such pairs reports 0 for both.
pub fn compute_stats(log: &EventLog) -> LogStats {
    let lengths: Vec<usize> = log.traces.iter().map(Trace::len).collect();
    let event_count: usize = lengths.iter().sum();
    let trace_count = lengths.len();

    let gaps: Vec<f64> = log
        .traces
        .iter()
        .flat_map(|t| t.deltas().into_iter().skip(1))
        .collect();
    let (avg, std) = if gaps.is_empty() {
        (0.0, 0.0)
    } else {
        let n = gaps.len() as f64;
        let mean = gaps.iter().sum::<f64>() / n;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };

    LogStats {
        trace_count,
        event_count,
        label_count: log.vocabulary.activity_count(),
        max_trace_len: lengths.iter().copied().max().unwrap_or(0),
        min_trace_len: lengths.iter().copied().min().unwrap_or(0),
        avg_trace_len: if trace_count == 0 {
            0.0
        } else {
            event_count as f64 / trace_count as f64
        },
        avg_delta_secs: avg,
        std_delta_secs: std,
    }
}

/// Orders traces by first-event timestamp (stable) and cuts the earliest
/// `floor(fraction * N)` into the training half. Both halves keep the parent vocabulary.
pub fn temporal_split(
    log: &EventLog,
    train_fraction: f64,
) -> Result<(EventLog, EventLog), LogError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(LogError::BadFraction(train_fraction));
    }
    let n = log.traces.len();
    let cut = (train_fraction * n as f64).floor() as usize;
    if cut == 0 || cut == n {
        return Err(LogError::EmptySplit {
            traces: n,
            fraction: train_fraction,
        });
    }
    let mut ordered: Vec<&Trace> = log.traces.iter().collect();
    ordered.sort_by_key(|t| t.start());
    let half = |ts: &[&Trace]| EventLog {
        traces: ts.iter().map(|t| (*t).clone()).collect(),
        vocabulary: log.vocabulary.clone(),
    };
    Ok((half(&ordered[..cut]), half(&ordered[cut..])))
}
