//! Deterministic synthetic logs for smoke tests, benchmarks and demos.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::event_log::{Event, EventLog, Trace};

/// Chain grammar over `labels` activities: `L0 -> L1 -> ... -> L(n-1) -> end`.
/// Each trace starts at a random label and runs to the end of the chain, so
/// the next activity is a deterministic function of the current one. The
/// delay before activity `Li` is `(i + 1)` hours; traces start one hour apart.
pub fn chain_log(traces: usize, labels: usize, seed: u64) -> EventLog {
    assert!(labels >= 2 && traces >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin: NaiveDateTime = NaiveDate::from_ymd_opt(2020, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid origin");
    let out = (0..traces)
        .map(|c| {
            let case_id = format!("case-{c:05}");
            let first = rng.gen_range(0..labels - 1);
            let mut t = origin + Duration::hours(c as i64);
            let events = (first..labels)
                .enumerate()
                .map(|(pos, label)| {
                    if pos > 0 {
                        t += Duration::hours(label as i64 + 1);
                    }
                    Event {
                        case_id: case_id.clone(),
                        activity: format!("L{label}"),
                        timestamp: t,
                    }
                })
                .collect();
            Trace { case_id, events }
        })
        .collect();
    EventLog::from_traces(out).expect("non-empty")
}

/// Traces of exactly `len` events cycling through `labels` activities with
/// fixed delays; used where every trace must yield the same number of windows.
pub fn fixed_length_log(traces: usize, labels: usize, len: usize, seed: u64) -> EventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin: NaiveDateTime = NaiveDate::from_ymd_opt(2021, 6, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid origin");
    let out = (0..traces)
        .map(|c| {
            let case_id = format!("case-{c:05}");
            let start = rng.gen_range(0..labels);
            let mut t = origin + Duration::minutes(c as i64 * 30);
            let events = (0..len)
                .map(|pos| {
                    let label = (start + pos) % labels;
                    if pos > 0 {
                        t += Duration::minutes(15 * (label as i64 + 1));
                    }
                    Event {
                        case_id: case_id.clone(),
                        activity: format!("L{label}"),
                        timestamp: t,
                    }
                })
                .collect();
            Trace { case_id, events }
        })
        .collect();
    EventLog::from_traces(out).expect("non-empty")
}
