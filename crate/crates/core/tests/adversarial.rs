mod common;

use common::random_pair;
use nextevent::adversarial::players::soften_output;
use nextevent::adversarial::{
    build_real_fake, discriminator_update, generator_gradients, generator_update, train,
    Discriminator, Generator, GeneratorTerms, Mode, TrainingConfig,
};
use nextevent::encoding::build_dataset;
use nextevent::exec::Execution;
use nextevent::neural::{clamped_ln, clamped_ln_one_minus};
use nextevent::synthetic::chain_log;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn generator_terms_add_up() {
    let mut r = rng(1);
    let m = 5;
    let gen = Generator::new(m, &mut r);
    let disc = Discriminator::new(m, &mut r);
    for k in [1, 2, 4] {
        let pair = random_pair(m, k, &mut r);
        let (outs, tape) = gen.forward(&pair).unwrap();
        let grad = |terms| {
            generator_gradients(&gen, Some(&disc), &pair, &outs, &tape, terms)
                .unwrap()
                .grads
                .flatten()
        };
        let both = grad(GeneratorTerms::Both);
        let adv = grad(GeneratorTerms::Adversarial);
        let lik = grad(GeneratorTerms::Likelihood);
        for ((b, a), l) in both.iter().zip(&adv).zip(&lik) {
            assert!((b - (a + l)).abs() <= 1e-10, "k={k}");
        }
        let conventional =
            generator_gradients(&gen, None, &pair, &outs, &tape, GeneratorTerms::Both).unwrap();
        assert_eq!(conventional.grads.flatten(), lik);
        assert!(conventional.adv.is_none());
    }
}

#[test]
fn discriminator_step_leaves_generator_untouched() {
    let mut r = rng(2);
    let m = 4;
    let gen = Generator::new(m, &mut r);
    let mut disc = Discriminator::new(m, &mut r);
    let snapshot = gen.clone();
    let pairs: Vec<_> = (0..5).map(|_| random_pair(m, 3, &mut r)).collect();
    let rfs: Vec<_> = pairs
        .iter()
        .map(|p| {
            let (outs, _) = gen.forward(p).unwrap();
            build_real_fake(p, &outs[2])
        })
        .collect();
    let d_before = disc.network.flatten();
    discriminator_update(&mut disc, &rfs, &TrainingConfig::default()).unwrap();
    assert_ne!(disc.network.flatten(), d_before);
    assert_eq!(gen, snapshot);
}

#[test]
fn generator_step_leaves_discriminator_untouched() {
    let mut r = rng(3);
    let m = 4;
    let mut gen = Generator::new(m, &mut r);
    let disc = Discriminator::new(m, &mut r);
    let snapshot = disc.clone();
    let pairs: Vec<_> = (0..5).map(|_| random_pair(m, 2, &mut r)).collect();
    let refs: Vec<_> = pairs.iter().collect();
    let forwards: Vec<_> = pairs.iter().map(|p| gen.forward(p).unwrap()).collect();
    let g_before = gen.network.flatten();
    let step = generator_update(
        &mut gen,
        Some(&disc),
        &refs,
        &forwards,
        &TrainingConfig::default(),
    )
    .unwrap();
    assert!(step.adv_loss.is_some());
    assert_ne!(gen.network.flatten(), g_before);
    assert_eq!(disc, snapshot);
}

#[test]
fn discriminator_step_increases_objective_on_toy_pair() {
    let mut r = rng(4);
    let m = 4;
    let gen = Generator::new(m, &mut r);
    let mut disc = Discriminator::new(m, &mut r);
    let pair = random_pair(m, 2, &mut r);
    let (outs, _) = gen.forward(&pair).unwrap();
    let rf = build_real_fake(&pair, &outs[1]);
    let objective = |d: &Discriminator| {
        clamped_ln(d.score(&rf.real).unwrap().0).0
            + clamped_ln_one_minus(d.score(&rf.fake).unwrap().0).0
    };
    let before = objective(&disc);
    let step = discriminator_update(
        &mut disc,
        std::slice::from_ref(&rf),
        &TrainingConfig::default(),
    )
    .unwrap();
    assert!((step.objective - before).abs() < 1e-12);
    assert!(objective(&disc) > before);
}

#[test]
fn real_and_fake_share_the_prefix() {
    let mut r = rng(5);
    let m = 6;
    let gen = Generator::new(m, &mut r);
    for k in 1..6 {
        let pair = random_pair(m, k, &mut r);
        let (outs, _) = gen.forward(&pair).unwrap();
        let rf = build_real_fake(&pair, &outs[k - 1]);
        assert_eq!(rf.real.len(), k + 1);
        assert_eq!(rf.real[..k], rf.fake[..k]);
        assert_eq!(rf.real[k], *pair.last_target());
        assert_eq!(rf.fake[k], soften_output(&outs[k - 1]));
        let probs = rf.fake[k].label_part().iter().sum::<f64>();
        assert!((probs - 1.0).abs() < 1e-12);
    }
}

fn small_config(mode: Mode, execution: Execution) -> TrainingConfig {
    TrainingConfig {
        epochs: 3,
        patience: 2,
        mode,
        execution,
        seed: 77,
        ..TrainingConfig::default()
    }
}

#[test]
fn training_is_deterministic_and_strategy_independent() {
    let log = chain_log(40, 4, 9);
    let ds = build_dataset(&log, 2, None).unwrap();
    for mode in [Mode::Adversarial, Mode::Conventional] {
        let a = train(&ds, &small_config(mode, Execution::Sequential)).unwrap();
        let b = train(&ds, &small_config(mode, Execution::Sequential)).unwrap();
        let c = train(&ds, &small_config(mode, Execution::Parallel)).unwrap();
        assert_eq!(a.generator, b.generator);
        assert_eq!(a.generator, c.generator);
        assert_eq!(a.trace, c.trace);
        assert_eq!(a.discriminator, c.discriminator);
    }
}

#[test]
fn seeds_change_initialization() {
    let log = chain_log(30, 3, 1);
    let ds = build_dataset(&log, 2, None).unwrap();
    let mut cfg = small_config(Mode::Conventional, Execution::default());
    let a = train(&ds, &cfg).unwrap();
    cfg.seed += 1;
    let b = train(&ds, &cfg).unwrap();
    assert_ne!(a.generator.network, b.generator.network);
}

#[test]
fn conventional_trace_has_no_discriminator_columns() {
    let log = chain_log(30, 3, 2);
    let ds = build_dataset(&log, 2, None).unwrap();
    let model = train(&ds, &small_config(Mode::Conventional, Execution::default())).unwrap();
    assert!(model.discriminator.is_none());
    let mut csv = Vec::new();
    model.trace.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epoch,g_loss,d_loss,mean_DX,mean_DZ"));
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 5);
        assert_eq!(&cells[2..], ["", "", ""]);
    }
}
