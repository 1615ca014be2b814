use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::layers::{prefixed, Affine, Parameterized, TensorView};

/// Desk-scale stand-in for the senone classifier: two ReLU hidden layers and
/// a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyClassifier {
    pub hidden1: Affine,
    pub hidden2: Affine,
    pub output: Affine,
}

#[derive(Debug, Clone)]
pub struct ClassifierCache {
    pub input: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub logits: Vec<f64>,
}

pub const DEFAULT_HIDDEN: usize = 128;

impl ToyClassifier {
    pub fn random<R: Rng + ?Sized>(inputs: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            hidden1: Affine::random(inputs, hidden, rng),
            hidden2: Affine::random(hidden, hidden, rng),
            output: Affine::random(hidden, classes, rng),
        }
    }

    pub fn inputs(&self) -> usize {
        self.hidden1.inputs
    }

    pub fn classes(&self) -> usize {
        self.output.outputs
    }

    pub fn forward(&self, x: &[f64]) -> Result<ClassifierCache> {
        if x.len() != self.inputs() {
            return shape_err(format!("classifier expects {} inputs, got {}", self.inputs(), x.len()));
        }
        let relu = |v: Vec<f64>| v.into_iter().map(|a| a.max(0.0)).collect::<Vec<_>>();
        let h1 = relu(self.hidden1.apply(x));
        let h2 = relu(self.hidden2.apply(&h1));
        let logits = self.output.apply(&h2);
        Ok(ClassifierCache {
            input: x.to_vec(),
            h1,
            h2,
            logits,
        })
    }

    /// Back-propagates `dL/dlogits`; returns `dL/dx` when requested.
    pub fn backward(
        &self,
        cache: &ClassifierCache,
        grad_logits: &[f64],
        grads: &mut ToyClassifier,
        need_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let mut g2 = self
            .output
            .backward(&cache.h2, grad_logits, &mut grads.output, true)
            .expect("grad");
        for (g, h) in g2.iter_mut().zip(&cache.h2) {
            if *h <= 0.0 {
                *g = 0.0;
            }
        }
        let mut g1 = self
            .hidden2
            .backward(&cache.h1, &g2, &mut grads.hidden2, true)
            .expect("grad");
        for (g, h) in g1.iter_mut().zip(&cache.h1) {
            if *h <= 0.0 {
                *g = 0.0;
            }
        }
        self.hidden1
            .backward(&cache.input, &g1, &mut grads.hidden1, need_input_grad)
    }
}

impl Parameterized for ToyClassifier {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut v = prefixed("hidden1", self.hidden1.tensors());
        v.extend(prefixed("hidden2", self.hidden2.tensors()));
        v.extend(prefixed("output", self.output.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.hidden1.tensors_mut();
        v.extend(self.hidden2.tensors_mut());
        v.extend(self.output.tensors_mut());
        v
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    Ok(-log_softmax(logits)[label])
}
