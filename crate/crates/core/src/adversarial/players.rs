use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{FeatureVector, PrefixPair};
use crate::neural::{softmax, Activation, AdamState, LstmStack, NeuralError, Tape};

/// LSTM layers per player.
pub const PLAYER_LAYERS: usize = 2;

/// Hidden width per layer for feature dimension `m`.
pub fn hidden_size(m: usize) -> usize {
    2 * m
}

/// Next-event predictor: two LSTM layers and an identity head of width `m`
/// (label logits followed by the standardized time delta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub network: LstmStack,
    pub optimizer: AdamState,
}

impl Generator {
    pub fn new<R: Rng>(m: usize, rng: &mut R) -> Self {
        Self::from_network(LstmStack::new(
            m,
            hidden_size(m),
            PLAYER_LAYERS,
            m,
            Activation::Identity,
            rng,
        ))
    }

    pub fn from_network(network: LstmStack) -> Self {
        let optimizer = AdamState::new(&network);
        Self { network, optimizer }
    }

    pub fn dim(&self) -> usize {
        self.network.input_dim()
    }

    /// Outputs `o(1..k)` for the pair's inputs plus the tape for BPTT.
    pub fn forward(&self, pair: &PrefixPair) -> Result<(Vec<Vec<f64>>, Tape), NeuralError> {
        self.network.forward(&pair.inputs)
    }
}

/// Scores a `(k+1)`-sequence as real: two LSTM layers and a sigmoid head of width 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub network: LstmStack,
    pub optimizer: AdamState,
}

impl Discriminator {
    pub fn new<R: Rng>(m: usize, rng: &mut R) -> Self {
        Self::from_network(LstmStack::new(
            m,
            hidden_size(m),
            PLAYER_LAYERS,
            1,
            Activation::Sigmoid,
            rng,
        ))
    }

    pub fn from_network(network: LstmStack) -> Self {
        let optimizer = AdamState::new(&network);
        Self { network, optimizer }
    }

    /// Probability (final step) that `sequence` is real, plus the tape.
    pub fn score(&self, sequence: &[FeatureVector]) -> Result<(f64, Tape), NeuralError> {
        let (out, tape) = self.network.forward(sequence)?;
        let p = out.last().map(|o| o[0]).ok_or(NeuralError::Length {
            expected: 1,
            got: 0,
        })?;
        Ok((p, tape))
    }
}

/// Real sequence `x(1..k), y(k)` and fake sequence `x(1..k), õ(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealFakePair {
    pub real: Vec<FeatureVector>,
    pub fake: Vec<FeatureVector>,
}

/// Generator output with softmax applied to the label slice; the time channel is kept raw.
pub fn soften_output(output: &[f64]) -> FeatureVector {
    let labels = output.len() - 1;
    let mut v = softmax(&output[..labels]);
    v.push(output[labels]);
    FeatureVector::from_values(v)
}

/// Chains a gradient with respect to [`soften_output`]'s result back to the raw output.
pub fn soften_output_backward(output: &[f64], upstream: &[f64]) -> Vec<f64> {
    let labels = output.len() - 1;
    let p = softmax(&output[..labels]);
    let inner: f64 = p.iter().zip(upstream).map(|(a, b)| a * b).sum();
    let mut grad: Vec<f64> = p
        .iter()
        .zip(upstream)
        .map(|(pj, gj)| pj * (gj - inner))
        .collect();
    grad.push(upstream[labels]);
    grad
}

pub fn build_real_fake(pair: &PrefixPair, last_output: &[f64]) -> RealFakePair {
    let mut real = pair.inputs.clone();
    real.push(pair.last_target().clone());
    let mut fake = pair.inputs.clone();
    fake.push(soften_output(last_output));
    RealFakePair { real, fake }
}
