use super::matrix::{log_sum_exp, softmax};

/// Lower/upper clamp applied to discriminator probabilities before logs.
pub const PROB_EPS: f64 = 1e-7;

/// Per-step loss: cross-entropy of `softmax(label logits)` against the
/// target's one-hot label, plus squared error on the time channel.
/// Returns the loss and its exact gradient with respect to `output`.
pub fn label_time_loss(output: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(
        output.len(),
        target.len(),
        "output/target dimension mismatch"
    );
    let labels = output.len() - 1;
    let logits = &output[..labels];
    let lse = log_sum_exp(logits);
    let ce: f64 = target[..labels]
        .iter()
        .zip(logits)
        .map(|(y, z)| y * (lse - z))
        .sum();
    let diff = output[labels] - target[labels];
    let mut grad = softmax(logits);
    for (g, y) in grad.iter_mut().zip(&target[..labels]) {
        *g -= y;
    }
    grad.push(2.0 * diff);
    (ce + diff * diff, grad)
}

/// `ln(clamp(p))` and its derivative with respect to `p` (zero where the clamp is active).
pub fn clamped_ln(p: f64) -> (f64, f64) {
    if p < PROB_EPS {
        (PROB_EPS.ln(), 0.0)
    } else if p > 1.0 - PROB_EPS {
        ((1.0 - PROB_EPS).ln(), 0.0)
    } else {
        (p.ln(), 1.0 / p)
    }
}

/// `ln(1 - clamp(p))` and its derivative with respect to `p`.
pub fn clamped_ln_one_minus(p: f64) -> (f64, f64) {
    if p < PROB_EPS {
        ((1.0 - PROB_EPS).ln(), 0.0)
    } else if p > 1.0 - PROB_EPS {
        (PROB_EPS.ln(), 0.0)
    } else {
        ((1.0 - p).ln(), -1.0 / (1.0 - p))
    }
}
