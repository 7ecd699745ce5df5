//! Stacked LSTM with a dense output head, forward pass with an activation
//! tape, and exact backpropagation through time.
//!
//! Cell (gate order i, f, o, g in the stacked weight rows):
//!
//! ```text
//! z  = Wx·x + Wh·h_prev + b
//! i  = σ(z_i)   f = σ(z_f)   o = σ(z_o)   g = tanh(z_g)
//! c  = f ⊙ c_prev + i ⊙ g
//! h  = o ⊙ tanh(c)
//! y  = φ(V·h_top + b_out)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{sigmoid, Matrix};
use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    /// `4h × input`
    pub input_weights: Matrix,
    /// `4h × h`
    pub hidden_weights: Matrix,
    /// `4h`
    pub bias: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input_weights: Matrix::zeros(4 * hidden, input),
            hidden_weights: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform in `[-1/√h, 1/√h]`.
    pub fn uniform<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            input_weights: Matrix::uniform(4 * hidden, input, bound, rng),
            hidden_weights: Matrix::uniform(4 * hidden, hidden, bound, rng),
            bias: (0..4 * hidden)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_weights.cols()
    }

    pub fn input_size(&self) -> usize {
        self.input_weights.cols()
    }

    fn check(&self) -> Result<(), NeuralError> {
        let h = self.hidden_size();
        let ok = self.hidden_weights.rows() == 4 * h
            && self.input_weights.rows() == 4 * h
            && self.bias.len() == 4 * h;
        ok.then_some(()).ok_or_else(|| {
            NeuralError::Shape(format!(
                "lstm layer: input {:?}, hidden {:?}, bias {}",
                self.input_weights.shape(),
                self.hidden_weights.shape(),
                self.bias.len()
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    /// `out × h`
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseParams {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn uniform<R: Rng>(
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: Matrix::uniform(output, input, bound, rng),
            bias: (0..output).map(|_| rng.gen_range(-bound..=bound)).collect(),
            activation,
        }
    }
}

/// Parameters of a stacked LSTM plus dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmStack {
    pub layers: Vec<LstmLayerParams>,
    pub head: DenseParams,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Activations recorded by [`LstmStack::forward`], sufficient for the exact backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    layers: Vec<Vec<StepCache>>,
    outputs: Vec<Vec<f64>>,
}

impl Tape {
    pub fn steps(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }
}

/// Gradients shaped like an [`LstmStack`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    inner: LstmStack,
}

impl GradientSet {
    pub fn zeros_like(params: &LstmStack) -> Self {
        Self {
            inner: params.zeros_like(),
        }
    }

    pub fn layers(&self) -> &[LstmLayerParams] {
        &self.inner.layers
    }

    pub fn head(&self) -> &DenseParams {
        &self.inner.head
    }

    /// Tensors grouped by layer (one group per LSTM layer, then the head).
    pub fn groups(&self) -> Vec<Vec<&[f64]>> {
        self.inner.groups()
    }

    pub fn groups_mut(&mut self) -> Vec<Vec<&mut [f64]>> {
        self.inner.groups_mut()
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self
            .inner
            .tensors_mut()
            .into_iter()
            .zip(other.inner.tensors())
        {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.inner.tensors_mut() {
            for x in t {
                *x *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.inner
            .tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.inner
            .tensors()
            .iter()
            .all(|t| t.iter().all(|&x| x == 0.0))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.inner.flatten()
    }
}

/// Result of [`LstmStack::backward`].
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: GradientSet,
    /// Gradient of the loss with respect to every input vector.
    pub input_grads: Vec<Vec<f64>>,
}

impl LstmStack {
    /// Randomly initialized stack with `layers` LSTM layers of width `hidden`.
    pub fn new<R: Rng>(
        input: usize,
        hidden: usize,
        layers: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(layers >= 1 && hidden >= 1 && input >= 1 && output >= 1);
        let mut ls = Vec::with_capacity(layers);
        for l in 0..layers {
            let fan_in = if l == 0 { input } else { hidden };
            ls.push(LstmLayerParams::uniform(fan_in, hidden, rng));
        }
        let head = DenseParams::uniform(hidden, output, activation, rng);
        Self { layers: ls, head }
    }

    pub fn zeros(
        input: usize,
        hidden: usize,
        layers: usize,
        output: usize,
        activation: Activation,
    ) -> Self {
        let ls = (0..layers)
            .map(|l| LstmLayerParams::zeros(if l == 0 { input } else { hidden }, hidden))
            .collect();
        Self {
            layers: ls,
            head: DenseParams::zeros(hidden, output, activation),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayerParams::zeros(l.input_size(), l.hidden_size()))
                .collect(),
            head: DenseParams::zeros(
                self.head.weight.cols(),
                self.head.weight.rows(),
                self.head.activation,
            ),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_dim(&self) -> usize {
        self.head.weight.rows()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .map(LstmLayerParams::hidden_size)
            .collect()
    }

    /// Checks that all shapes are mutually consistent.
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.layers.is_empty() {
            return Err(NeuralError::Shape("stack has no layers".into()));
        }
        let mut width = self.input_dim();
        for (idx, l) in self.layers.iter().enumerate() {
            l.check()?;
            if l.input_size() != width {
                return Err(NeuralError::Shape(format!(
                    "layer {idx} expects input {}, previous width is {width}",
                    l.input_size()
                )));
            }
            width = l.hidden_size();
        }
        if self.head.weight.cols() != width || self.head.bias.len() != self.head.weight.rows() {
            return Err(NeuralError::Shape(format!(
                "head {:?} with bias {} after width {width}",
                self.head.weight.shape(),
                self.head.bias.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        self.groups().into_iter().flatten().collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.groups_mut().into_iter().flatten().collect()
    }

    /// Parameter tensors grouped by layer (each LSTM layer, then the head).
    pub fn groups(&self) -> Vec<Vec<&[f64]>> {
        let mut out: Vec<Vec<&[f64]>> = self
            .layers
            .iter()
            .map(|l| {
                vec![
                    l.input_weights.as_slice(),
                    l.hidden_weights.as_slice(),
                    &l.bias[..],
                ]
            })
            .collect();
        out.push(vec![self.head.weight.as_slice(), &self.head.bias[..]]);
        out
    }

    pub fn groups_mut(&mut self) -> Vec<Vec<&mut [f64]>> {
        let mut out: Vec<Vec<&mut [f64]>> = self
            .layers
            .iter_mut()
            .map(|l| {
                vec![
                    l.input_weights.as_mut_slice(),
                    l.hidden_weights.as_mut_slice(),
                    &mut l.bias[..],
                ]
            })
            .collect();
        out.push(vec![
            self.head.weight.as_mut_slice(),
            &mut self.head.bias[..],
        ]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Runs the stack over `inputs` from zero initial states. Returns one
    /// head output per step and the tape for [`LstmStack::backward`].
    pub fn forward<S: AsRef<[f64]>>(
        &self,
        inputs: &[S],
    ) -> Result<(Vec<Vec<f64>>, Tape), NeuralError> {
        let dim = self.input_dim();
        for (t, x) in inputs.iter().enumerate() {
            if x.as_ref().len() != dim {
                return Err(NeuralError::Shape(format!(
                    "input {t} has dimension {}, expected {dim}",
                    x.as_ref().len()
                )));
            }
        }
        let steps = inputs.len();
        let mut current: Vec<Vec<f64>> = inputs.iter().map(|x| x.as_ref().to_vec()).collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let h = layer.hidden_size();
            let mut h_prev = vec![0.0; h];
            let mut c_prev = vec![0.0; h];
            let mut steps_cache = Vec::with_capacity(steps);
            for x in current {
                let mut z = layer.bias.clone();
                layer.input_weights.mul_vec_acc(&x, &mut z);
                layer.hidden_weights.mul_vec_acc(&h_prev, &mut z);
                let i: Vec<f64> = z[..h].iter().map(|&v| sigmoid(v)).collect();
                let f: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
                let o: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| sigmoid(v)).collect();
                let g: Vec<f64> = z[3 * h..].iter().map(|v| v.tanh()).collect();
                let c: Vec<f64> = (0..h).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
                let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
                let h_new: Vec<f64> = (0..h).map(|j| o[j] * tanh_c[j]).collect();
                steps_cache.push(StepCache {
                    x,
                    h_prev: std::mem::replace(&mut h_prev, h_new.clone()),
                    c_prev: std::mem::replace(&mut c_prev, c),
                    i,
                    f,
                    o,
                    g,
                    tanh_c,
                    h: h_new,
                });
            }
            current = steps_cache.iter().map(|s| s.h.clone()).collect();
            caches.push(steps_cache);
        }
        let outputs: Vec<Vec<f64>> = current
            .iter()
            .map(|h| {
                let mut y = self.head.bias.clone();
                self.head.weight.mul_vec_acc(h, &mut y);
                if self.head.activation == Activation::Sigmoid {
                    y.iter_mut().for_each(|v| *v = sigmoid(*v));
                }
                y
            })
            .collect();
        Ok((
            outputs.clone(),
            Tape {
                layers: caches,
                outputs,
            },
        ))
    }

    /// Exact gradients of a scalar loss whose derivative with respect to
    /// output `t` is `upstream[t]`.
    pub fn backward(&self, tape: &Tape, upstream: &[Vec<f64>]) -> Result<Backward, NeuralError> {
        if upstream.len() != tape.steps() {
            return Err(NeuralError::Length {
                expected: tape.steps(),
                got: upstream.len(),
            });
        }
        if tape.layers.len() != self.layers.len() {
            return Err(NeuralError::Shape(
                "tape recorded with a different stack".into(),
            ));
        }
        let out_dim = self.output_dim();
        let mut grads = self.zeros_like();

        // head
        let top = tape.layers.last().expect("at least one layer");
        let mut dh_above: Vec<Vec<f64>> = Vec::with_capacity(tape.steps());
        for (t, up) in upstream.iter().enumerate() {
            if up.len() != out_dim {
                return Err(NeuralError::Shape(format!(
                    "upstream {t} has dimension {}, expected {out_dim}",
                    up.len()
                )));
            }
            let dy: Vec<f64> = match self.head.activation {
                Activation::Identity => up.clone(),
                Activation::Sigmoid => up
                    .iter()
                    .zip(&tape.outputs[t])
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect(),
            };
            let h = &top[t].h;
            grads.head.weight.add_outer(&dy, h);
            for (b, d) in grads.head.bias.iter_mut().zip(&dy) {
                *b += d;
            }
            let mut dh = vec![0.0; h.len()];
            self.head.weight.mul_t_vec_acc(&dy, &mut dh);
            dh_above.push(dh);
        }

        for (l, layer) in self.layers.iter().enumerate().rev() {
            let h = layer.hidden_size();
            let cache = &tape.layers[l];
            let g = &mut grads.layers[l];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let mut dx_all = vec![Vec::new(); cache.len()];
            let mut dz = vec![0.0; 4 * h];
            for t in (0..cache.len()).rev() {
                let s = &cache[t];
                for j in 0..h {
                    let dh = dh_above[t][j] + dh_next[j];
                    let d_o = dh * s.tanh_c[j];
                    let dc = dh * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
                    let di = dc * s.g[j];
                    let dg = dc * s.i[j];
                    let df = dc * s.c_prev[j];
                    dc_next[j] = dc * s.f[j];
                    dz[j] = di * s.i[j] * (1.0 - s.i[j]);
                    dz[h + j] = df * s.f[j] * (1.0 - s.f[j]);
                    dz[2 * h + j] = d_o * s.o[j] * (1.0 - s.o[j]);
                    dz[3 * h + j] = dg * (1.0 - s.g[j] * s.g[j]);
                }
                g.input_weights.add_outer(&dz, &s.x);
                g.hidden_weights.add_outer(&dz, &s.h_prev);
                for (b, d) in g.bias.iter_mut().zip(&dz) {
                    *b += d;
                }
                let mut dx = vec![0.0; layer.input_size()];
                layer.input_weights.mul_t_vec_acc(&dz, &mut dx);
                dx_all[t] = dx;
                dh_next.iter_mut().for_each(|v| *v = 0.0);
                layer.hidden_weights.mul_t_vec_acc(&dz, &mut dh_next);
            }
            dh_above = dx_all;
        }

        Ok(Backward {
            grads: GradientSet { inner: grads },
            input_grads: dh_above,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_parameters_give_zero_outputs() {
        let net = LstmStack::zeros(3, 6, 2, 3, Activation::Identity);
        let inputs = vec![vec![1.0, -2.0, 0.5], vec![3.0, 0.0, 1.0]];
        let (out, _) = net.forward(&inputs).unwrap();
        assert!(out.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_closed_form() {
        // 1 -> 1 -> 1, hand-set weights
        let mut net = LstmStack::zeros(1, 1, 1, 1, Activation::Identity);
        let l = &mut net.layers[0];
        for (row, (wx, b)) in [(0.5, 0.1), (-0.3, 0.2), (0.8, -0.1), (1.2, 0.05)]
            .iter()
            .enumerate()
        {
            l.input_weights.set(row, 0, *wx);
            l.bias[row] = *b;
        }
        net.head.weight.set(0, 0, 2.0);
        net.head.bias[0] = -0.5;
        let x = 0.7;
        let (out, _) = net.forward(&[vec![x]]).unwrap();

        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(0.5 * x + 0.1);
        let o = s(0.8 * x - 0.1);
        let g = (1.2 * x + 0.05f64).tanh();
        let c = i * g; // c_prev = 0 so the forget gate drops out
        let expected = 2.0 * o * c.tanh() - 0.5;
        assert!((out[0][0] - expected).abs() < 1e-15);
    }

    #[test]
    fn outputs_are_causal() {
        let net = LstmStack::new(3, 6, 2, 3, Activation::Identity, &mut rng());
        let mut inputs: Vec<Vec<f64>> = (0..4).map(|t| vec![t as f64 * 0.1, 0.3, -0.2]).collect();
        let (a, _) = net.forward(&inputs).unwrap();
        inputs[2][1] += 5.0;
        let (b, _) = net.forward(&inputs).unwrap();
        assert_eq!(a[..2], b[..2]);
        assert_ne!(a[2], b[2]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = LstmStack::new(3, 6, 2, 3, Activation::Identity, &mut rng());
        let inputs = vec![vec![0.1, 0.2, 0.3]; 3];
        let (_, tape) = net.forward(&inputs).unwrap();
        let back = net.backward(&tape, &vec![vec![0.0; 3]; 3]).unwrap();
        assert!(back.grads.is_zero());
        assert!(back.input_grads.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let net = LstmStack::new(3, 6, 2, 3, Activation::Identity, &mut rng());
        assert!(matches!(
            net.forward(&[vec![0.0; 2]]),
            Err(NeuralError::Shape(_))
        ));
        let (_, tape) = net.forward(&[vec![0.0; 3]]).unwrap();
        assert!(matches!(
            net.backward(&tape, &[]),
            Err(NeuralError::Length {
                expected: 1,
                got: 0
            })
        ));
        let mut broken = net.clone();
        broken.layers[1] = LstmLayerParams::zeros(5, 6);
        assert!(broken.validate().is_err());
        assert!(net.validate().is_ok());
    }

    #[test]
    fn groups_cover_every_parameter() {
        let net = LstmStack::new(3, 6, 2, 1, Activation::Sigmoid, &mut rng());
        // layer0: 24*3 + 24*6 + 24, layer1: 24*6 + 24*6 + 24, head: 6 + 1
        assert_eq!(net.parameter_count(), 240 + 312 + 7);
        assert_eq!(net.groups().len(), 3);
    }
}
