use rand::Rng;

use super::{uniform_init, Parameterized, TensorView};
use crate::error::{shape_err, Result};

/// Dense `y = W x + b`, weights row-major `[output][input]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Affine {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * outputs || biases.len() != outputs {
            return shape_err(format!(
                "affine {inputs}->{outputs} given {} weights and {} biases",
                weights.len(),
                biases.len()
            ));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            biases,
        })
    }

    /// Random weights, zero biases.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            inputs,
            outputs,
            weights: uniform_init(rng, inputs * outputs, inputs),
            biases: vec![0.0; outputs],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            weights[i * n + i] = 1.0;
        }
        Self {
            inputs: n,
            outputs: n,
            weights,
            biases: vec![0.0; n],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return shape_err(format!("affine expects {} inputs, got {}", self.inputs, x.len()));
        }
        Ok(self.apply(x))
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx` when
    /// `need_input_grad` is set.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grads: &mut Affine, need_input_grad: bool) -> Option<Vec<f64>> {
        let mut grad_in = need_input_grad.then(|| vec![0.0; self.inputs]);
        for (o, &g) in grad_out.iter().enumerate() {
            grads.biases[o] += g;
            if g == 0.0 {
                continue;
            }
            let range = o * self.inputs..(o + 1) * self.inputs;
            for (gw, v) in grads.weights[range.clone()].iter_mut().zip(x) {
                *gw += g * v;
            }
            if let Some(gi) = grad_in.as_mut() {
                for (acc, w) in gi.iter_mut().zip(&self.weights[range]) {
                    *acc += g * w;
                }
            }
        }
        grad_in
    }
}

impl Parameterized for Affine {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        vec![
            TensorView {
                name: "weights".into(),
                shape: vec![self.outputs, self.inputs],
                data: &self.weights,
            },
            TensorView {
                name: "biases".into(),
                shape: vec![self.outputs],
                data: &self.biases,
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights, &mut self.biases]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_zero_input() {
        let x = vec![0.5, -1.0, 3.0];
        assert_eq!(Affine::identity(3).forward(&x).unwrap(), x);
        let mut a = Affine::random(3, 2, &mut ChaCha8Rng::seed_from_u64(1));
        a.biases = vec![0.25, -4.0];
        assert_eq!(a.forward(&[0.0; 3]).unwrap(), vec![0.25, -4.0]);
        assert!(a.forward(&[0.0; 4]).is_err());
    }

    #[test]
    fn matches_loop_oracle_at_full_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = Affine::random(1524, 127, &mut rng);
        a.biases = (0..127).map(|i| i as f64 * 0.01).collect();
        let x: Vec<f64> = (0..1524).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
        let y = a.forward(&x).unwrap();
        for o in 0..127 {
            let mut acc = a.biases[o];
            for i in 0..1524 {
                acc += a.weights[o * 1524 + i] * x[i];
            }
            assert!((y[o] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_bounded() {
        let a = Affine::random(16, 8, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(a.weights.iter().all(|w| w.abs() <= 0.25));
        assert!(a.biases.iter().all(|&b| b == 0.0));
    }
}
