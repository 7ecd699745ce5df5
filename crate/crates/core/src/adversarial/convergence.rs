//! Per-epoch loss log and the early / late / none convergence taxonomy.

use std::io::Write;

use serde::{Deserialize, Serialize};

/// Tolerance below 0.5 at which the discriminator counts as confused.
pub const CONFUSION_DELTA: f64 = 0.1;
/// Consecutive epochs the confusion must persist.
pub const CONFUSION_RUN: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub g_loss: f64,
    pub d_loss: Option<f64>,
    pub mean_real: Option<f64>,
    pub mean_fake: Option<f64>,
    pub val_j: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub epochs: Vec<EpochRecord>,
}

impl ConvergenceTrace {
    pub fn push(&mut self, record: EpochRecord) {
        self.epochs.push(record);
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// CSV with columns `epoch,g_loss,d_loss,mean_DX,mean_DZ`; discriminator
    /// columns are left empty when no discriminator was trained.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,g_loss,d_loss,mean_DX,mean_DZ")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.epoch,
                r.g_loss,
                opt(r.d_loss),
                opt(r.mean_real),
                opt(r.mean_fake)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvergencePattern {
    Early,
    Late,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convergence {
    pub pattern: ConvergencePattern,
    pub epoch: Option<usize>,
}

/// First epoch from which mean `D(Z) >= 0.5 - δ` holds for
/// [`CONFUSION_RUN`] consecutive epochs. Early if it falls within the first
/// third of the recorded epochs, late otherwise.
pub fn classify_convergence(trace: &ConvergenceTrace, total_epochs: usize) -> Convergence {
    let none = Convergence {
        pattern: ConvergencePattern::None,
        epoch: None,
    };
    if trace.len() < CONFUSION_RUN {
        return none;
    }
    let confused: Vec<bool> = trace
        .epochs
        .iter()
        .map(|r| r.mean_fake.is_some_and(|dz| dz >= 0.5 - CONFUSION_DELTA))
        .collect();
    let start = confused
        .windows(CONFUSION_RUN)
        .position(|w| w.iter().all(|&c| c));
    match start {
        Some(i) => {
            let epoch = trace.epochs[i].epoch;
            let pattern = if (epoch as f64) <= total_epochs as f64 / 3.0 {
                ConvergencePattern::Early
            } else {
                ConvergencePattern::Late
            };
            Convergence {
                pattern,
                epoch: Some(epoch),
            }
        }
        None => none,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(dz: impl Fn(usize) -> Option<f64>, n: usize) -> ConvergenceTrace {
        ConvergenceTrace {
            epochs: (1..=n)
                .map(|e| EpochRecord {
                    epoch: e,
                    g_loss: 1.0,
                    d_loss: dz(e).map(|_| 1.0),
                    mean_real: dz(e).map(|_| 0.6),
                    mean_fake: dz(e),
                    val_j: None,
                })
                .collect(),
        }
    }

    #[test]
    fn pinned_discriminator_never_converges() {
        let t = trace(|_| Some(1e-7), 25);
        assert_eq!(
            classify_convergence(&t, 25).pattern,
            ConvergencePattern::None
        );
    }

    #[test]
    fn confusion_from_epoch_two_is_early() {
        let t = trace(|e| Some(if e >= 2 { 0.45 } else { 0.01 }), 25);
        let c = classify_convergence(&t, 25);
        assert_eq!(c.pattern, ConvergencePattern::Early);
        assert_eq!(c.epoch, Some(2));
    }

    #[test]
    fn crossing_at_twenty_is_late() {
        let t = trace(|e| Some(if e >= 20 { 0.48 } else { 0.2 }), 25);
        let c = classify_convergence(&t, 25);
        assert_eq!(c.pattern, ConvergencePattern::Late);
        assert_eq!(c.epoch, Some(20));
    }

    #[test]
    fn unsustained_spike_and_conventional_traces_are_none() {
        let t = trace(|e| Some(if e == 5 || e == 6 { 0.5 } else { 0.1 }), 25);
        assert_eq!(
            classify_convergence(&t, 25).pattern,
            ConvergencePattern::None
        );
        let conventional = trace(|_| None, 25);
        assert_eq!(
            classify_convergence(&conventional, 25).pattern,
            ConvergencePattern::None
        );
        assert_eq!(
            classify_convergence(&trace(|_| Some(0.5), 2), 25).pattern,
            ConvergencePattern::None
        );
    }

    #[test]
    fn csv_leaves_discriminator_columns_empty_without_one() {
        let mut buf = Vec::new();
        trace(|_| None, 2).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "epoch,g_loss,d_loss,mean_DX,mean_DZ\n1,1,,,\n2,1,,,\n"
        );
    }
}
