//! Adversarially trained next-event prediction for business-process event logs.
//!
//! Pipeline: [`event_log`] parses and splits a CSV log, [`encoding`] turns
//! traces into one-hot + time-delta k-prefix pairs, [`neural`] supplies the
//! LSTM stack, losses and optimizer, [`adversarial`] runs the
//! generator/discriminator game, and [`eval`] scores predictions per k.

pub mod adversarial;
pub mod cli;
pub mod encoding;
pub mod eval;
pub mod event_log;
pub mod exec;
pub mod neural;
pub mod synthetic;

pub use adversarial::{train, Discriminator, Generator, Mode, TrainedModel, TrainingConfig};
pub use encoding::{
    build_dataset, encode_trace, extract_k_prefixes, FeatureVector, PrefixDataset, PrefixPair,
    TimeScaler,
};
pub use eval::{evaluate_k, predict_next, sweep, EvalReport, KMetrics, SweepOptions};
pub use event_log::{
    compute_stats, parse_csv, temporal_split, CsvSchema, EventLog, LogStats, Trace, Vocabulary,
};
pub use exec::Execution;
