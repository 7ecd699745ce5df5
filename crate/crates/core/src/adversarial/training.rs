//! Minmax training loop: per batch, generator forward, real/fake
//! construction, one discriminator ascent step, then one generator descent
//! step on `log(1 - D(Z)) + J`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::convergence::{ConvergenceTrace, EpochRecord};
use super::players::{
    build_real_fake, soften_output_backward, Discriminator, Generator, RealFakePair,
};
use crate::encoding::{PrefixDataset, PrefixPair};
use crate::exec::{map_ordered, Execution};
use crate::neural::{
    clamped_ln, clamped_ln_one_minus, clip_gradients, label_time_loss, GradientSet, NeuralError,
    Tape,
};

/// Generator outputs for one pair with the tape needed to backpropagate them.
pub type Forward = (Vec<Vec<f64>>, Tape);

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("dataset of {pairs} pairs leaves no training batches after holding out {held_out} for validation")]
    EmptyPartition { pairs: usize, held_out: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("dataset dimension {dataset} does not match network dimension {network}")]
    Dimension { dataset: usize, network: usize },
    #[error("training halted: {0}")]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Adversarial,
    /// Likelihood term only; no discriminator.
    Conventional,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adversarial" => Ok(Mode::Adversarial),
            "conventional" => Ok(Mode::Conventional),
            other => Err(format!(
                "unknown mode {other:?} (adversarial | conventional)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub clip_threshold: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Trailing share of training pairs held out for early stopping; 0 disables it.
    pub validation_fraction: f64,
    pub seed: u64,
    pub mode: Mode,
    pub execution: Execution,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            batch_size: 5,
            lr_generator: 0.0002,
            lr_discriminator: 0.0002,
            clip_threshold: 10.0,
            patience: 5,
            validation_fraction: 0.2,
            seed: 42,
            mode: Mode::Adversarial,
            execution: Execution::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 {
            return fail("epochs must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.lr_generator > 0.0 && self.lr_generator.is_finite())
            || !(self.lr_discriminator > 0.0 && self.lr_discriminator.is_finite())
        {
            return fail("learning rates must be positive and finite");
        }
        if self.clip_threshold.is_nan() || self.clip_threshold <= 0.0 {
            return fail("clip_threshold must be positive");
        }
        if self.patience == 0 || self.patience >= self.epochs {
            return fail("patience must be positive and smaller than epochs");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail("validation_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorStep {
    /// Batch mean of `ln D(X) + ln(1 - D(Z))` before the update.
    pub objective: f64,
    pub mean_real: f64,
    pub mean_fake: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorStep {
    /// Batch mean of `ln(1 - D(Z))`; `None` in conventional mode.
    pub adv_loss: Option<f64>,
    /// Batch mean of `J`.
    pub j_loss: f64,
}

/// Which parts of the generator objective to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorTerms {
    Both,
    Adversarial,
    Likelihood,
}

/// Value and gradient of the generator objective for one pair.
#[derive(Debug, Clone)]
pub struct PairGradient {
    pub grads: GradientSet,
    pub adv: Option<f64>,
    pub j: f64,
}

/// `J = Σ_t L(t)` over all k steps, with per-step output gradients.
pub fn likelihood_loss(outputs: &[Vec<f64>], pair: &PrefixPair) -> (f64, Vec<Vec<f64>>) {
    let mut total = 0.0;
    let grads = outputs
        .iter()
        .zip(&pair.targets)
        .map(|(o, y)| {
            let (l, g) = label_time_loss(o, y.as_slice());
            total += l;
            g
        })
        .collect();
    (total, grads)
}

/// Generator gradient for a single pair given its forward pass. The
/// adversarial part backpropagates through the discriminator into the last
/// output; the discriminator itself is not modified.
pub fn generator_gradients(
    gen: &Generator,
    disc: Option<&Discriminator>,
    pair: &PrefixPair,
    outputs: &[Vec<f64>],
    tape: &Tape,
    terms: GeneratorTerms,
) -> Result<PairGradient, NeuralError> {
    let k = pair.k();
    let (j, j_grads) = likelihood_loss(outputs, pair);
    let mut upstream = match terms {
        GeneratorTerms::Adversarial => vec![vec![0.0; gen.dim()]; k],
        _ => j_grads,
    };
    let mut adv = None;
    if let Some(d) = disc {
        let last = &outputs[k - 1];
        let rf = build_real_fake(pair, last);
        let (p, d_tape) = d.score(&rf.fake)?;
        let (value, dvalue_dp) = clamped_ln_one_minus(p);
        adv = Some(value);
        if terms != GeneratorTerms::Likelihood {
            let mut d_up = vec![vec![0.0]; k + 1];
            d_up[k][0] = dvalue_dp;
            let back = d.network.backward(&d_tape, &d_up)?;
            let d_last = soften_output_backward(last, &back.input_grads[k]);
            for (u, g) in upstream[k - 1].iter_mut().zip(d_last) {
                *u += g;
            }
        }
    }
    let back = gen.network.backward(tape, &upstream)?;
    Ok(PairGradient {
        grads: back.grads,
        adv,
        j,
    })
}

fn sum_gradients(template: &GradientSet, parts: impl Iterator<Item = GradientSet>) -> GradientSet {
    let mut total = template.clone();
    for g in parts {
        total.add_assign(&g);
    }
    total
}

/// One ascent step of the discriminator on the batch-mean objective. Fake
/// sequences are constants here.
pub fn discriminator_update(
    disc: &mut Discriminator,
    batch: &[RealFakePair],
    cfg: &TrainingConfig,
) -> Result<DiscriminatorStep, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let d: &Discriminator = disc;
    let per_pair = map_ordered(cfg.execution, batch, |rf| -> Result<_, NeuralError> {
        let k1 = rf.real.len();
        let (p_real, tape_real) = d.score(&rf.real)?;
        let (p_fake, tape_fake) = d.score(&rf.fake)?;
        let (v_real, dv_real) = clamped_ln(p_real);
        let (v_fake, dv_fake) = clamped_ln_one_minus(p_fake);
        // descend the negated objective
        let mut up = vec![vec![0.0]; k1];
        up[k1 - 1][0] = -dv_real;
        let mut g = d.network.backward(&tape_real, &up)?.grads;
        up[k1 - 1][0] = -dv_fake;
        g.add_assign(&d.network.backward(&tape_fake, &up)?.grads);
        Ok((g, v_real + v_fake, p_real, p_fake))
    });
    let mut objective = 0.0;
    let mut mean_real = 0.0;
    let mut mean_fake = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for r in per_pair {
        let (g, obj, pr, pf) = r?;
        objective += obj;
        mean_real += pr;
        mean_fake += pf;
        grads.push(g);
    }
    let n = batch.len() as f64;
    let mut total = sum_gradients(&GradientSet::zeros_like(&disc.network), grads.into_iter());
    // the clipping rule is stated for the summed batch gradient
    clip_gradients(&mut total, batch.len(), cfg.clip_threshold);
    total.scale(1.0 / n);
    let Discriminator { network, optimizer } = disc;
    optimizer.step(network, &total, cfg.lr_discriminator)?;
    Ok(DiscriminatorStep {
        objective: objective / n,
        mean_real: mean_real / n,
        mean_fake: mean_fake / n,
    })
}

/// One descent step of the generator. `forwards[i]` must be the forward pass
/// of `pairs[i]` under the current generator parameters. With `disc = None`
/// only `J` is descended.
pub fn generator_update(
    gen: &mut Generator,
    disc: Option<&Discriminator>,
    pairs: &[&PrefixPair],
    forwards: &[Forward],
    cfg: &TrainingConfig,
) -> Result<GeneratorStep, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    assert_eq!(pairs.len(), forwards.len(), "one forward pass per pair");
    let g: &Generator = gen;
    let jobs: Vec<(&PrefixPair, &Forward)> = pairs.iter().copied().zip(forwards).collect();
    let per_pair = map_ordered(cfg.execution, &jobs, |(pair, (outputs, tape))| {
        generator_gradients(g, disc, pair, outputs, tape, GeneratorTerms::Both)
    });
    let mut adv = 0.0;
    let mut j = 0.0;
    let mut grads = Vec::with_capacity(pairs.len());
    for r in per_pair {
        let pg = r?;
        adv += pg.adv.unwrap_or(0.0);
        j += pg.j;
        grads.push(pg.grads);
    }
    let n = pairs.len() as f64;
    let mut total = sum_gradients(&GradientSet::zeros_like(&gen.network), grads.into_iter());
    // the clipping rule is stated for the summed batch gradient
    clip_gradients(&mut total, pairs.len(), cfg.clip_threshold);
    total.scale(1.0 / n);
    let Generator { network, optimizer } = gen;
    optimizer.step(network, &total, cfg.lr_generator)?;
    Ok(GeneratorStep {
        adv_loss: disc.map(|_| adv / n),
        j_loss: j / n,
    })
}

/// Mean `J` over `pairs`.
pub fn mean_likelihood(
    gen: &Generator,
    pairs: &[PrefixPair],
    exec: Execution,
) -> Result<f64, NeuralError> {
    let losses = map_ordered(exec, pairs, |p| -> Result<f64, NeuralError> {
        let (out, _) = gen.forward(p)?;
        Ok(likelihood_loss(&out, p).0)
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub generator: Generator,
    pub discriminator: Option<Discriminator>,
    pub trace: ConvergenceTrace,
    /// Epoch (1-based) whose generator parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream)
}

/// Trains a generator on `dataset`. The trailing `validation_fraction` of
/// pairs drives early stopping; the best-validation generator is returned.
pub fn train(dataset: &PrefixDataset, cfg: &TrainingConfig) -> Result<TrainedModel, TrainError> {
    cfg.validate()?;
    let m = dataset.dim();
    if let Some(p) = dataset.pairs.first() {
        if p.inputs[0].dim() != m {
            return Err(TrainError::Dimension {
                dataset: p.inputs[0].dim(),
                network: m,
            });
        }
    }
    let n = dataset.pairs.len();
    let held_out = (n as f64 * cfg.validation_fraction).floor() as usize;
    if n == 0 || held_out >= n {
        return Err(TrainError::EmptyPartition { pairs: n, held_out });
    }
    let (train_pairs, val_pairs) = dataset.pairs.split_at(n - held_out);
    if held_out == 0 && cfg.validation_fraction > 0.0 {
        log::info!("validation split of {n} pairs is empty; early stopping disabled");
    }

    let mut gen = Generator::new(m, &mut ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 1)));
    let mut disc = match cfg.mode {
        Mode::Adversarial => Some(Discriminator::new(
            m,
            &mut ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 2)),
        )),
        Mode::Conventional => None,
    };
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 3));

    let mut trace = ConvergenceTrace::default();
    let mut best: Option<(f64, usize, Generator)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut g_sum = 0.0;
        let mut d_sum = 0.0;
        let mut dx_sum = 0.0;
        let mut dz_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PrefixPair> = chunk.iter().map(|&i| &train_pairs[i]).collect();
            let g_ref = &gen;
            let forwards = map_ordered(cfg.execution, &batch, |p| g_ref.forward(p))
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(d) = disc.as_mut() {
                let rfs: Vec<RealFakePair> = batch
                    .iter()
                    .zip(&forwards)
                    .map(|(p, (out, _))| build_real_fake(p, &out[p.k() - 1]))
                    .collect();
                let ds = discriminator_update(d, &rfs, cfg)?;
                d_sum -= ds.objective;
                dx_sum += ds.mean_real;
                dz_sum += ds.mean_fake;
            }
            let gs = generator_update(&mut gen, disc.as_ref(), &batch, &forwards, cfg)?;
            g_sum += gs.adv_loss.unwrap_or(0.0) + gs.j_loss;
            batches += 1;
        }
        let b = batches as f64;
        let val_j = if val_pairs.is_empty() {
            None
        } else {
            Some(mean_likelihood(&gen, val_pairs, cfg.execution)?)
        };
        let adversarial = disc.is_some();
        trace.push(EpochRecord {
            epoch,
            g_loss: g_sum / b,
            d_loss: adversarial.then_some(d_sum / b),
            mean_real: adversarial.then_some(dx_sum / b),
            mean_fake: adversarial.then_some(dz_sum / b),
            val_j,
        });
        log::debug!("epoch {epoch}: g_loss {:.5} val_j {:?}", g_sum / b, val_j);

        if let Some(v) = val_j {
            match &best {
                Some((bv, _, _)) if v >= *bv => since_best += 1,
                _ => {
                    best = Some((v, epoch, gen.clone()));
                    since_best = 0;
                }
            }
            if since_best >= cfg.patience {
                stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }

    let (generator, best_epoch) = match best {
        Some((_, e, g)) => (g, e),
        None => (gen, trace.len()),
    };
    Ok(TrainedModel {
        generator,
        discriminator: disc,
        trace,
        best_epoch,
        stopped_early,
    })
}
