use serde::{Deserialize, Serialize};

use super::lstm::{GradientSet, LstmStack};
use super::NeuralError;

/// Bias-corrected Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &LstmStack) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Applies one descent step in place. Non-finite gradients are rejected
    /// before anything is modified.
    pub fn step(
        &mut self,
        params: &mut LstmStack,
        grads: &GradientSet,
        lr: f64,
    ) -> Result<(), NeuralError> {
        if !grads.is_finite() {
            return Err(NeuralError::NonFinite("gradient"));
        }
        let grad_tensors: Vec<&[f64]> = grads.groups().into_iter().flatten().collect();
        let mut param_tensors = params.tensors_mut();
        if grad_tensors.len() != param_tensors.len() || grad_tensors.len() != self.first.len() {
            return Err(NeuralError::Shape(
                "optimizer/parameter/gradient tensor count".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in param_tensors
            .iter_mut()
            .zip(&grad_tensors)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(NeuralError::Shape(
                    "tensor length mismatch in optimizer".into(),
                ));
            }
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::lstm::Activation;
    use rand::SeedableRng;

    fn tiny() -> LstmStack {
        LstmStack::new(
            2,
            2,
            1,
            1,
            Activation::Identity,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(3),
        )
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = tiny();
        let before = p.clone();
        let mut s = AdamState::new(&p);
        s.step(&mut p, &GradientSet::zeros_like(&before), 0.0002)
            .unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = tiny();
        let before = p.flatten();
        let mut g = GradientSet::zeros_like(&p);
        g.groups_mut()[0][2][0] = 1.0;
        let mut s = AdamState::new(&p);
        s.step(&mut p, &g, 0.0002).unwrap();
        let after = p.flatten();
        let idx = 2 * 8 + 2 * 8; // first bias entry of layer 0
        let moved = before[idx] - after[idx];
        assert!((moved - 0.0002).abs() < 1e-10, "{moved}");
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = tiny();
        let before = p.clone();
        let mut g = GradientSet::zeros_like(&p);
        g.groups_mut()[1][0][0] = f64::NAN;
        let mut s = AdamState::new(&p);
        assert!(matches!(
            s.step(&mut p, &g, 0.1),
            Err(NeuralError::NonFinite(_))
        ));
        assert_eq!(p, before);
        assert_eq!(s.step, 0);
    }
}
