#![allow(dead_code)]

use nextevent::encoding::{FeatureVector, PrefixPair};
use nextevent::neural::{GradientSet, LstmStack};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_FLOOR: f64 = 1e-7;

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub failures: usize,
    pub worst_rel: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures == 0
    }

    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            checked: self.checked + other.checked,
            failures: self.failures + other.failures,
            worst_rel: self.worst_rel.max(other.worst_rel),
        }
    }
}

pub fn within_tolerance(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= FD_ABS_FLOOR.max(FD_REL_TOL * analytic.abs().max(numeric.abs()))
}

/// Copy of `stack` with its `index`-th scalar (in flatten order) shifted by `delta`.
pub fn perturbed(stack: &LstmStack, index: usize, delta: f64) -> LstmStack {
    let mut out = stack.clone();
    let mut seen = 0;
    for group in out.groups_mut() {
        for tensor in group {
            if index < seen + tensor.len() {
                tensor[index - seen] += delta;
                return out;
            }
            seen += tensor.len();
        }
    }
    panic!("parameter index {index} out of range");
}

/// Compares `analytic` against central differences of `objective` for
/// every parameter of `stack`.
pub fn fd_check<F>(stack: &LstmStack, analytic: &[f64], objective: F) -> GradCheck
where
    F: Fn(&LstmStack) -> f64,
{
    assert_eq!(analytic.len(), stack.parameter_count());
    let mut check = GradCheck::default();
    for (i, &a) in analytic.iter().enumerate() {
        let plus = objective(&perturbed(stack, i, FD_STEP));
        let minus = objective(&perturbed(stack, i, -FD_STEP));
        let n = (plus - minus) / (2.0 * FD_STEP);
        check.checked += 1;
        let scale = a.abs().max(n.abs());
        if scale > 0.0 {
            check.worst_rel = check.worst_rel.max((a - n).abs() / scale.max(FD_ABS_FLOOR));
        }
        if !within_tolerance(a, n) {
            check.failures += 1;
        }
    }
    check
}

/// `Σ_t ⟨w_t, out_t⟩` for a random linear read-out of every step.
pub fn linear_readout(stack: &LstmStack, inputs: &[Vec<f64>], weights: &[Vec<f64>]) -> f64 {
    let (outs, _) = stack.forward(inputs).expect("forward");
    outs.iter()
        .zip(weights)
        .map(|(o, w)| o.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// Full check of a stack's BPTT against a random linear read-out.
pub fn check_stack_bptt(stack: &LstmStack, inputs: &[Vec<f64>], weights: &[Vec<f64>]) -> GradCheck {
    let (_, tape) = stack.forward(inputs).expect("forward");
    let back = stack.backward(&tape, weights).expect("backward");
    fd_check(stack, &back.grads.flatten(), |s| {
        linear_readout(s, inputs, weights)
    })
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

/// Random k-prefix pair with `m - 1` one-hot slots plus a time channel.
pub fn random_pair<R: Rng>(m: usize, k: usize, rng: &mut R) -> PrefixPair {
    let labels = m - 1;
    let vecs: Vec<FeatureVector> = (0..=k)
        .map(|_| FeatureVector::one_hot(rng.gen_range(0..labels), labels, rng.gen_range(-1.5..1.5)))
        .collect();
    PrefixPair {
        inputs: vecs[..k].to_vec(),
        targets: vecs[1..].to_vec(),
    }
}

/// Counts windows the slow way: every start position whose k inputs and
/// following target all lie inside a sequence of `encoded_len` vectors.
pub fn brute_force_window_count(encoded_len: usize, k: usize) -> usize {
    let mut count = 0;
    for start in 0..encoded_len {
        let mut fits = true;
        for offset in 0..=k {
            if start + offset >= encoded_len {
                fits = false;
            }
        }
        if fits {
            count += 1;
        }
    }
    count
}

/// Textbook Adam on a flat parameter vector.
pub struct ReferenceAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl ReferenceAdam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        let (b1, b2, eps) = (0.9_f64, 0.999_f64, 1e-8);
        self.t += 1;
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grads[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grads[i] * grads[i];
            let m_hat = self.m[i] / (1.0 - b1.powf(self.t as f64));
            let v_hat = self.v[i] / (1.0 - b2.powf(self.t as f64));
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Gradient set for `stack` filled from a flat vector in flatten order.
pub fn gradient_from_flat(stack: &LstmStack, flat: &[f64]) -> GradientSet {
    let mut g = GradientSet::zeros_like(stack);
    let mut it = flat.iter();
    for group in g.groups_mut() {
        for tensor in group {
            for x in tensor.iter_mut() {
                *x = *it.next().expect("enough values");
            }
        }
    }
    assert!(it.next().is_none(), "too many values");
    g
}

/// Plain-loop forward pass of an LSTM stack (gate order i, f, o, g),
/// written independently of the library's matrix helpers.
#[allow(clippy::needless_range_loop)]
pub fn reference_forward(stack: &LstmStack, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut hs: Vec<Vec<f64>> = stack
        .layers
        .iter()
        .map(|l| vec![0.0; l.hidden_size()])
        .collect();
    let mut cs = hs.clone();
    let mut outputs = Vec::new();
    for x in inputs {
        let mut below = x.clone();
        for (l, layer) in stack.layers.iter().enumerate() {
            let h = layer.hidden_size();
            let mut pre = layer.bias.clone();
            for r in 0..4 * h {
                for c in 0..below.len() {
                    pre[r] += layer.input_weights.get(r, c) * below[c];
                }
                for c in 0..h {
                    pre[r] += layer.hidden_weights.get(r, c) * hs[l][c];
                }
            }
            for j in 0..h {
                let i_g = sig(pre[j]);
                let f_g = sig(pre[h + j]);
                let o_g = sig(pre[2 * h + j]);
                let g_g = pre[3 * h + j].tanh();
                cs[l][j] = f_g * cs[l][j] + i_g * g_g;
                hs[l][j] = o_g * cs[l][j].tanh();
            }
            below = hs[l].clone();
        }
        let head = &stack.head;
        let mut out = head.bias.clone();
        for (r, o) in out.iter_mut().enumerate() {
            for (c, b) in below.iter().enumerate() {
                *o += head.weight.get(r, c) * b;
            }
        }
        if head.activation == nextevent::neural::Activation::Sigmoid {
            out.iter_mut().for_each(|o| *o = sig(*o));
        }
        outputs.push(out);
    }
    outputs
}
