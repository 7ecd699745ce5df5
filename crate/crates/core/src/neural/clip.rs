use super::lstm::GradientSet;

/// Clipping threshold used during training.
pub const DEFAULT_CLIP_THRESHOLD: f64 = 10.0;

/// Per-layer rescaling: when `‖g‖₂ / batch_size > threshold` the layer's
/// gradient is rescaled to norm `threshold`, otherwise it is left alone.
pub fn clip_gradients(grads: &mut GradientSet, batch_size: usize, threshold: f64) {
    assert!(batch_size >= 1, "batch size must be positive");
    for group in grads.groups_mut() {
        let norm = group
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        if norm / batch_size as f64 > threshold {
            let factor = threshold / norm;
            for t in group {
                t.iter_mut().for_each(|x| *x *= factor);
            }
        }
    }
}

/// L2 norm of each layer group.
pub fn layer_norms(grads: &GradientSet) -> Vec<f64> {
    grads
        .groups()
        .iter()
        .map(|g| {
            g.iter()
                .flat_map(|t| t.iter())
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::lstm::{Activation, LstmStack};

    fn with_layer_norm(norm: f64) -> GradientSet {
        let net = LstmStack::zeros(2, 2, 1, 1, Activation::Identity);
        let mut g = GradientSet::zeros_like(&net);
        // 3-4-5 triangle scaled to the requested norm in the LSTM layer
        {
            let mut groups = g.groups_mut();
            groups[0][0][0] = 0.6 * norm;
            groups[0][2][1] = 0.8 * norm;
            groups[1][0][0] = 1.0;
        }
        g
    }

    #[test]
    fn below_trigger_is_unchanged() {
        let mut g = with_layer_norm(40.0);
        let before = g.clone();
        clip_gradients(&mut g, 5, 10.0);
        assert_eq!(g, before);
    }

    #[test]
    fn above_trigger_rescales_to_threshold() {
        let mut g = with_layer_norm(100.0);
        let before = g.clone();
        clip_gradients(&mut g, 5, 10.0);
        let norms = layer_norms(&g);
        assert!((norms[0] - 10.0).abs() < 1e-12);
        assert_eq!(norms[1], 1.0);
        // direction preserved
        let (a, b) = (before.flatten(), g.flatten());
        for (x, y) in a.iter().zip(&b).take(28) {
            assert!((x * 0.1 - y).abs() < 1e-12);
        }
    }

    #[test]
    fn clipping_is_idempotent() {
        let mut once = with_layer_norm(1000.0);
        clip_gradients(&mut once, 1, 10.0);
        let mut twice = once.clone();
        clip_gradients(&mut twice, 1, 10.0);
        assert_eq!(once, twice);
    }
}
