//! Feature extraction layer: a mel-initialised affine map followed by ReLU
//! and a floored logarithm, `log(max(W z + b, 0) + eps)`.

use crate::error::{shape_err, Error, Result};
use crate::layers::{Parameterized, TensorView};

pub const DEFAULT_MEL_FILTERS: usize = 64;
pub const DEFAULT_FMIN_HZ: f64 = 60.0;
pub const DEFAULT_FMAX_HZ: f64 = 7600.0;
pub const DEFAULT_LOG_FLOOR: f64 = 1e-7;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with apexes equally spaced on the mel scale between
/// `fmin` and `fmax`. Each triangle has apex value 1 and reaches zero at the
/// neighbouring apexes, giving 50% overlap in mel space. The triangles are
/// sampled at the centre frequencies of bins `1..=K` of an FFT of size
/// `2(K+1)`, so the DC bin is never used. Returns `[filter][bin]`.
pub fn mel_filterbank_init(bins: usize, filters: usize, sample_rate: f64, fmin: f64, fmax: f64) -> Result<Vec<f64>> {
    if filters == 0 || bins == 0 {
        return Err(Error::InvalidConfig("mel filterbank needs >= 1 filter and bin".into()));
    }
    if !(0.0 <= fmin && fmin < fmax && fmax <= sample_rate / 2.0) {
        return Err(Error::InvalidConfig(format!(
            "invalid mel band edges {fmin}..{fmax} Hz at {sample_rate} Hz"
        )));
    }
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..filters + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (filters + 1) as f64))
        .collect();
    let fft_size = 2 * (bins + 1);
    let mut w = vec![0.0; filters * bins];
    for f in 0..filters {
        let (lo, mid, hi) = (edges[f], edges[f + 1], edges[f + 2]);
        for k in 0..bins {
            let freq = (k + 1) as f64 * sample_rate / fft_size as f64;
            let v = if freq > lo && freq <= mid {
                (freq - lo) / (mid - lo)
            } else if freq > mid && freq < hi {
                (hi - freq) / (hi - mid)
            } else {
                0.0
            };
            w[f * bins + k] = v;
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeLayer {
    pub filters: usize,
    pub bins: usize,
    /// `[filter][bin]`
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub log_floor: f64,
}

#[derive(Debug, Clone)]
pub struct FeCache {
    pub pre_activation: Vec<f64>,
}

impl FeLayer {
    pub fn mel(bins: usize, filters: usize, sample_rate: f64, fmin: f64, fmax: f64, log_floor: f64) -> Result<Self> {
        if !(log_floor > 0.0) {
            return Err(Error::InvalidConfig("log floor must be positive".into()));
        }
        Ok(Self {
            filters,
            bins,
            weights: mel_filterbank_init(bins, filters, sample_rate, fmin, fmax)?,
            biases: vec![0.0; filters],
            log_floor,
        })
    }

    /// 64 filters over 60..7600 Hz at 16 kHz.
    pub fn default_mel(bins: usize) -> Result<Self> {
        Self::mel(
            bins,
            DEFAULT_MEL_FILTERS,
            16_000.0,
            DEFAULT_FMIN_HZ,
            DEFAULT_FMAX_HZ,
            DEFAULT_LOG_FLOOR,
        )
    }

    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, FeCache)> {
        if z.len() != self.bins {
            return shape_err(format!("FE expects {} inputs, got {}", self.bins, z.len()));
        }
        Ok(self.apply(z))
    }

    pub(crate) fn apply(&self, z: &[f64]) -> (Vec<f64>, FeCache) {
        let pre: Vec<f64> = self
            .weights
            .chunks_exact(self.bins)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect();
        let out = pre.iter().map(|&p| (p.max(0.0) + self.log_floor).ln()).collect();
        (out, FeCache { pre_activation: pre })
    }

    /// Accumulates parameter gradients and returns `dL/dz`.
    pub fn backward(&self, z: &[f64], cache: &FeCache, grad_out: &[f64], grads: &mut FeLayer) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.bins];
        for (f, (&p, &g)) in cache.pre_activation.iter().zip(grad_out).enumerate() {
            if p <= 0.0 {
                continue;
            }
            let gp = g / (p + self.log_floor);
            grads.biases[f] += gp;
            let row = f * self.bins..(f + 1) * self.bins;
            for (gw, &x) in grads.weights[row].iter_mut().zip(z) {
                *gw += gp * x;
            }
            for (gi, &w) in grad_in
                .iter_mut()
                .zip(&self.weights[f * self.bins..(f + 1) * self.bins])
            {
                *gi += gp * w;
            }
        }
        grad_in
    }
}

impl Parameterized for FeLayer {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        vec![
            TensorView {
                name: "weights".into(),
                shape: vec![self.filters, self.bins],
                data: &self.weights,
            },
            TensorView {
                name: "biases".into(),
                shape: vec![self.filters],
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

    #[test]
    fn mel_of_700_hz() {
        let expect = 2595.0 * 2f64.log10();
        assert!((hz_to_mel(700.0) - expect).abs() < 1e-12);
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn single_filter_peaks_mid_band() {
        let w = mel_filterbank_init(127, 1, 16000.0, 0.0, 8000.0).unwrap();
        let centre_hz = mel_to_hz(hz_to_mel(8000.0) / 2.0);
        let (peak_bin, peak) = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, v)| (i, *v))
            .unwrap();
        let below = (centre_hz / 62.5).floor() as usize - 1;
        assert!(peak_bin == below || peak_bin == below + 1, "{peak_bin} vs {below}");
        assert!(peak <= 1.0 && peak > 0.98);
        assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn default_bank_covers_band() {
        let w = mel_filterbank_init(127, 64, 16000.0, 60.0, 7600.0).unwrap();
        for k in 0..127 {
            let f = (k + 1) as f64 * 62.5;
            if f > 60.0 && f < 7600.0 {
                assert!((0..64).any(|r| w[r * 127 + k] > 0.0), "bin {k} at {f} Hz uncovered");
            }
        }
        assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn invalid_edges() {
        assert!(mel_filterbank_init(10, 4, 16000.0, 500.0, 400.0).is_err());
        assert!(mel_filterbank_init(10, 4, 16000.0, 0.0, 9000.0).is_err());
        assert!(mel_filterbank_init(10, 0, 16000.0, 0.0, 8000.0).is_err());
    }

    #[test]
    fn forward_examples() {
        let fe = FeLayer::default_mel(127).unwrap();
        let (out, _) = fe.forward(&[0.0; 127]).unwrap();
        assert!(out.iter().all(|&v| (v - 1e-7f64.ln()).abs() < 1e-12));

        let eps = 1e-7;
        let fe = FeLayer {
            filters: 1,
            bins: 1,
            weights: vec![1.0],
            biases: vec![0.0],
            log_floor: eps,
        };
        let (out, _) = fe.forward(&[std::f64::consts::E - eps]).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-12);
        assert!(fe.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn forward_matches_loop_oracle_and_never_nan() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut fe = FeLayer::default_mel(127).unwrap();
        fe.weights.iter_mut().for_each(|w| *w += rng.random_range(-0.5..0.5));
        fe.biases.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let z: Vec<f64> = (0..127).map(|_| rng.random_range(-2.0..5.0)).collect();
        let (out, _) = fe.forward(&z).unwrap();
        for f in 0..64 {
            let mut acc = fe.biases[f];
            for k in 0..127 {
                acc += fe.weights[f * 127 + k] * z[k];
            }
            let expect = (if acc > 0.0 { acc } else { 0.0 } + 1e-7).ln();
            assert!((out[f] - expect).abs() < 1e-12);
            assert!(out[f].is_finite() && out[f] >= 1e-7f64.ln());
        }
    }

    #[test]
    fn monotone_in_non_negative_inputs() {
        let fe = FeLayer::default_mel(127).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z: Vec<f64> = (0..127).map(|_| rng.random_range(0.0..3.0)).collect();
        let base = fe.forward(&z).unwrap().0;
        for k in (0..127).step_by(9) {
            let mut z2 = z.clone();
            z2[k] += 0.5;
            let out = fe.forward(&z2).unwrap().0;
            assert!(out.iter().zip(&base).all(|(a, b)| a >= b));
        }
    }
}
