//! Versioned, self-describing JSON checkpoint: network shapes with row-major
//! payloads, the vocabulary and the time scaler.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::lstm::LstmStack;
use super::NeuralError;
use crate::encoding::TimeScaler;
use crate::event_log::Vocabulary;

pub const CHECKPOINT_FORMAT: &str = "nextevent-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub k: usize,
    pub vocabulary: Vocabulary,
    pub scaler: TimeScaler,
    pub network: LstmStack,
}

impl Checkpoint {
    pub fn new(k: usize, vocabulary: Vocabulary, scaler: TimeScaler, network: LstmStack) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            k,
            vocabulary,
            scaler,
            network,
        }
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), NeuralError> {
        serde_json::to_writer_pretty(w, self).map_err(|e| NeuralError::Checkpoint(e.to_string()))
    }

    pub fn read<R: Read>(r: R) -> Result<Self, NeuralError> {
        let ck: Checkpoint =
            serde_json::from_reader(r).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(NeuralError::Checkpoint(format!(
                "unknown format {:?}",
                ck.format
            )));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!(
                "unsupported version {}",
                ck.version
            )));
        }
        ck.network.validate()?;
        if ck.network.input_dim() != ck.vocabulary.len() + 1 {
            return Err(NeuralError::Checkpoint(
                "network input does not match vocabulary".into(),
            ));
        }
        if !ck.network.is_finite() {
            return Err(NeuralError::NonFinite("checkpoint parameters"));
        }
        Ok(ck)
    }
}
