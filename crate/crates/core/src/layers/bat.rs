use num_complex::Complex64;
use rand::Rng;

use super::{uniform_init, Parameterized, TensorView};
use crate::array::SuperdirectiveWeights;
use crate::error::{shape_err, Result};
use crate::frontend::MultiChannelSpectrum;

/// Block affine transform: for each bin `k` and look direction `d`,
/// `out[k][d] = w[k][d]^H x[:, k] + b[k][d]`.
///
/// Weights are stored `[bin][direction][mic]` and biases `[bin][direction]`,
/// both as interleaved (re, im) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BatLayer {
    pub channels: usize,
    pub directions: usize,
    pub bins: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// BAT output, bin-major: index `k * directions + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatOutput {
    pub directions: usize,
    pub bins: usize,
    pub values: Vec<Complex64>,
}

impl BatOutput {
    pub fn get(&self, direction: usize, bin: usize) -> Complex64 {
        self.values[bin * self.directions + direction]
    }
}

impl BatLayer {
    pub fn zeros(channels: usize, directions: usize, bins: usize) -> Self {
        Self {
            channels,
            directions,
            bins,
            weights: vec![0.0; 2 * channels * directions * bins],
            biases: vec![0.0; 2 * directions * bins],
        }
    }

    /// Exact copy of the superdirective design, zero biases.
    pub fn from_superdirective(sd: &SuperdirectiveWeights) -> Self {
        let mut layer = Self::zeros(sd.mics, sd.directions, sd.bins);
        for (i, w) in sd.weights.iter().enumerate() {
            layer.weights[2 * i] = w.re;
            layer.weights[2 * i + 1] = w.im;
        }
        layer
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, directions: usize, bins: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(channels, directions, bins);
        layer.weights = uniform_init(rng, layer.weights.len(), channels);
        layer
    }

    #[inline]
    fn widx(&self, bin: usize, direction: usize, mic: usize) -> usize {
        2 * ((bin * self.directions + direction) * self.channels + mic)
    }

    pub fn weight(&self, direction: usize, bin: usize, mic: usize) -> Complex64 {
        let i = self.widx(bin, direction, mic);
        Complex64::new(self.weights[i], self.weights[i + 1])
    }

    pub fn set_weight(&mut self, direction: usize, bin: usize, mic: usize, w: Complex64) {
        let i = self.widx(bin, direction, mic);
        self.weights[i] = w.re;
        self.weights[i + 1] = w.im;
    }

    pub fn bias(&self, direction: usize, bin: usize) -> Complex64 {
        let i = 2 * (bin * self.directions + direction);
        Complex64::new(self.biases[i], self.biases[i + 1])
    }

    pub fn set_bias(&mut self, direction: usize, bin: usize, b: Complex64) {
        let i = 2 * (bin * self.directions + direction);
        self.biases[i] = b.re;
        self.biases[i + 1] = b.im;
    }

    pub fn forward(&self, x: &MultiChannelSpectrum) -> Result<BatOutput> {
        if x.channels != self.channels || x.bins != self.bins {
            return shape_err(format!(
                "BAT expects {}x{} input, got {}x{}",
                self.channels, self.bins, x.channels, x.bins
            ));
        }
        let mut values = Vec::with_capacity(self.directions * self.bins);
        for k in 0..self.bins {
            for d in 0..self.directions {
                let mut acc = self.bias(d, k);
                for m in 0..self.channels {
                    acc += self.weight(d, k, m).conj() * x.get(m, k);
                }
                values.push(acc);
            }
        }
        Ok(BatOutput {
            directions: self.directions,
            bins: self.bins,
            values,
        })
    }

    /// With `out = conj(w) x + b`: `dL/dw = conj(g) x` and `dL/db = g`, where
    /// `g = dL/dRe + i dL/dIm` of the output.
    pub fn backward(&self, x: &MultiChannelSpectrum, grad_out: &[Complex64], grads: &mut BatLayer) {
        for k in 0..self.bins {
            for d in 0..self.directions {
                let g = grad_out[k * self.directions + d];
                let bi = 2 * (k * self.directions + d);
                grads.biases[bi] += g.re;
                grads.biases[bi + 1] += g.im;
                for m in 0..self.channels {
                    let gw = g.conj() * x.get(m, k);
                    let wi = self.widx(k, d, m);
                    grads.weights[wi] += gw.re;
                    grads.weights[wi + 1] += gw.im;
                }
            }
        }
    }
}

impl Parameterized for BatLayer {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        vec![
            TensorView {
                name: "weights".into(),
                shape: vec![self.bins, self.directions, self.channels, 2],
                data: &self.weights,
            },
            TensorView {
                name: "biases".into(),
                shape: vec![self.bins, self.directions, 2],
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
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_channel_identity() {
        let mut layer = BatLayer::zeros(1, 1, 4);
        for k in 0..4 {
            layer.set_weight(0, k, 0, c(1.0, 0.0));
        }
        let x = MultiChannelSpectrum::new(0, 1, 4, vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 0.0), c(7.0, -1.0)]).unwrap();
        let out = layer.forward(&x).unwrap();
        assert_eq!(out.values, x.data);
    }

    #[test]
    fn two_channel_substitution() {
        let mut layer = BatLayer::zeros(2, 1, 1);
        layer.set_weight(0, 0, 0, c(0.5, 0.0));
        layer.set_weight(0, 0, 1, c(0.5, 0.0));
        let x = MultiChannelSpectrum::new(0, 2, 1, vec![c(1.0, 1.0), c(1.0, -1.0)]).unwrap();
        let out = layer.forward(&x).unwrap();
        assert!((out.values[0] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (m, d, k) = (2, 12, 8);
        let mut layer = BatLayer::random(m, d, k, &mut rng);
        layer.biases = crate::layers::uniform_init(&mut rng, 2 * d * k, 1);
        let data: Vec<Complex64> = (0..m * k)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let x = MultiChannelSpectrum::new(0, m, k, data).unwrap();
        let out = layer.forward(&x).unwrap();
        for kk in 0..k {
            for dd in 0..d {
                let (mut re, mut im) = (0.0, 0.0);
                for mm in 0..m {
                    let wi = 2 * ((kk * d + dd) * m + mm);
                    let (a, b) = (layer.weights[wi], layer.weights[wi + 1]);
                    let (p, q) = (x.data[mm * k + kk].re, x.data[mm * k + kk].im);
                    // (a - ib)(p + iq)
                    re += a * p + b * q;
                    im += a * q - b * p;
                }
                re += layer.biases[2 * (kk * d + dd)];
                im += layer.biases[2 * (kk * d + dd) + 1];
                assert!((out.get(dd, kk) - c(re, im)).norm() < 1e-12);
            }
        }
        assert!(layer.forward(&MultiChannelSpectrum::zeros(0, 1, k)).is_err());
    }
}
