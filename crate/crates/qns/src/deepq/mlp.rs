//! From-scratch multilayer perceptron: rectifier hidden layers, linear
//! output, plain gradient descent. Small enough that dense loops beat any
//! framework overhead at these sizes.

use serde::{Deserialize, Serialize};

use super::DeepqError;
use crate::rngutil;
use rand::Rng;

/// One dense layer, weights row-major (out_dim x in_dim).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Q-network: input 2kV -> hidden layers (rectifier) -> k linear outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetworkModel {
    layers: Vec<Dense>,
}

/// Per-layer gradient accumulator with the same shapes as the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl QNetworkModel {
    /// Uniform fan-in-scaled initialization, seeded.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self, DeepqError> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(DeepqError::BadArchitecture(dims.to_vec()));
        }
        let mut rng = rngutil::stream(seed, "deepq.init", &[]);
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (in_dim, out_dim) = (pair[0], pair[1]);
                let scale = (1.0 / in_dim as f64).sqrt();
                Dense {
                    in_dim,
                    out_dim,
                    w: (0..in_dim * out_dim)
                        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
                        .collect(),
                    b: vec![0.0; out_dim],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self, DeepqError> {
        let mut model = Self::new(dims, 0)?;
        for layer in &mut model.layers {
            layer.w.iter_mut().for_each(|w| *w = 0.0);
        }
        Ok(model)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, DeepqError> {
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(DeepqError::BadArchitecture(
                    layers.iter().map(|l| l.in_dim).collect(),
                ));
            }
        }
        for l in &layers {
            if l.w.len() != l.in_dim * l.out_dim || l.b.len() != l.out_dim {
                return Err(DeepqError::BadArchitecture(vec![l.in_dim, l.out_dim]));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.layers.iter().map(|l| l.in_dim).collect();
        dims.push(self.layers.last().map_or(0, |l| l.out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    /// Flattened parameter vector, layer by layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut it = params.iter();
        for l in &mut self.layers {
            for w in &mut l.w {
                *w = *it.next().expect("parameter count mismatch");
            }
            for b in &mut l.b {
                *b = *it.next().expect("parameter count mismatch");
            }
        }
        assert!(it.next().is_none(), "parameter count mismatch");
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input).pop().unwrap()
    }

    /// Post-activation outputs of every layer (rectified except the last).
    fn forward_cached(&self, input: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(input.len(), self.input_dim(), "input dimension mismatch");
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut current = input;
        for (li, layer) in self.layers.iter().enumerate() {
            let last = li == self.layers.len() - 1;
            let mut out = layer.b.clone();
            for (o, row) in out.iter_mut().zip(layer.w.chunks_exact(layer.in_dim)) {
                let mut acc = 0.0;
                for (w, x) in row.iter().zip(current) {
                    acc += w * x;
                }
                *o += acc;
                if !last && *o < 0.0 {
                    *o = 0.0;
                }
            }
            activations.push(out);
            current = activations.last().unwrap();
        }
        activations
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    w: vec![0.0; l.w.len()],
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    /// Backpropagate `output_grad` (dL/dy) for one input, accumulating into
    /// `grads`. Returns the network output for reuse.
    pub fn accumulate_gradients(
        &self,
        input: &[f64],
        output_grad: &[f64],
        grads: &mut Gradients,
    ) -> Vec<f64> {
        let activations = self.forward_cached(input);
        let output = activations.last().unwrap().clone();
        let mut delta = output_grad.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let below: &[f64] = if li == 0 {
                input
            } else {
                &activations[li - 1]
            };
            // ReLU mask applies to hidden layers only.
            if li != self.layers.len() - 1 {
                for (d, a) in delta.iter_mut().zip(&activations[li]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let g = &mut grads.layers[li];
            for (o, d) in delta.iter().enumerate() {
                g.b[o] += d;
                let row = &mut g.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, x) in row.iter_mut().zip(below) {
                    *gw += d * x;
                }
            }
            if li > 0 {
                let mut next = vec![0.0; layer.in_dim];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                delta = next;
            }
        }
        output
    }

    /// One gradient-descent update at rate `lr`.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in layer.w.iter_mut().zip(&g.w) {
                *w -= lr * gw;
            }
            for (b, gb) in layer.b.iter_mut().zip(&g.b) {
                *b -= lr * gb;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_outputs() {
        let m = QNetworkModel::zeros(&[8, 4, 3]).unwrap();
        assert_eq!(m.forward(&vec![1.0; 8]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn manual_two_unit_forward_pass() {
        // x=2: h = relu(0.5*2 + 0.1) = 1.1; y = -2*1.1 + 0.3 = -1.9
        let m = QNetworkModel::from_layers(vec![
            Dense {
                in_dim: 1,
                out_dim: 1,
                w: vec![0.5],
                b: vec![0.1],
            },
            Dense {
                in_dim: 1,
                out_dim: 1,
                w: vec![-2.0],
                b: vec![0.3],
            },
        ])
        .unwrap();
        let y = m.forward(&[2.0]);
        assert!((y[0] - (-1.9)).abs() < 1e-10);
        // Negative pre-activation rectifies to zero: y = 0.3.
        let y = m.forward(&[-2.0]);
        assert!((y[0] - 0.3).abs() < 1e-10);
    }

    #[test]
    fn output_length_matches_action_count() {
        for k in [3usize, 4, 5] {
            let m = QNetworkModel::new(&[2 * k * 10, 128, 128, k], 1).unwrap();
            assert_eq!(m.forward(&vec![0.5; 2 * k * 10]).len(), k);
        }
    }

    #[test]
    fn params_roundtrip() {
        let mut m = QNetworkModel::new(&[4, 8, 2], 3).unwrap();
        let p = m.params();
        let mut m2 = QNetworkModel::zeros(&[4, 8, 2]).unwrap();
        m2.set_params(&p);
        assert_eq!(m, m2);
        m.set_params(&vec![0.0; p.len()]);
        assert_eq!(m.forward(&[1.0; 4]), vec![0.0, 0.0]);
    }

    #[test]
    fn analytic_gradient_one_parameter_linear_net() {
        // y = w*x + b, L = (y - t)^2; dL/dw = 2(y-t)x, dL/db = 2(y-t).
        let m = QNetworkModel::from_layers(vec![Dense {
            in_dim: 1,
            out_dim: 1,
            w: vec![1.5],
            b: vec![0.25],
        }])
        .unwrap();
        let (x, t) = (3.0, 2.0);
        let y = m.forward(&[x])[0];
        let mut grads = m.zero_gradients();
        m.accumulate_gradients(&[x], &[2.0 * (y - t)], &mut grads);
        let expected_dw = 2.0 * (y - t) * x;
        let expected_db = 2.0 * (y - t);
        assert!((grads.layers[0].w[0] - expected_dw).abs() < 1e-10);
        assert!((grads.layers[0].b[0] - expected_db).abs() < 1e-10);
    }

    #[test]
    fn backprop_matches_central_finite_differences() {
        for seed in 0..5u64 {
            let mut m = QNetworkModel::new(&[6, 7, 5, 3], seed).unwrap();
            let mut rng = crate::rngutil::stream(seed, "test.fd", &[]);
            use rand::Rng;
            let x: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let target: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let loss = |m: &QNetworkModel| -> f64 {
                m.forward(&x)
                    .iter()
                    .zip(&target)
                    .map(|(y, t)| (y - t) * (y - t))
                    .sum()
            };
            let y = m.forward(&x);
            let out_grad: Vec<f64> = y.iter().zip(&target).map(|(y, t)| 2.0 * (y - t)).collect();
            let mut grads = m.zero_gradients();
            m.accumulate_gradients(&x, &out_grad, &mut grads);
            let analytic: Vec<f64> = grads
                .layers
                .iter()
                .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
                .collect();
            let params = m.params();
            let h = 1e-5;
            for (i, &p) in params.iter().enumerate() {
                let mut plus = params.clone();
                plus[i] = p + h;
                m.set_params(&plus);
                let lp = loss(&m);
                let mut minus = params.clone();
                minus[i] = p - h;
                m.set_params(&minus);
                let lm = loss(&m);
                m.set_params(&params);
                let numeric = (lp - lm) / (2.0 * h);
                let denom = numeric.abs().max(analytic[i].abs()).max(1e-8);
                assert!(
                    (numeric - analytic[i]).abs() / denom < 1e-4,
                    "seed {seed} param {i}: analytic {} vs numeric {}",
                    analytic[i],
                    numeric
                );
            }
        }
    }
}
