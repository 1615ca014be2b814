use rand::Rng;

use super::{uniform_init, Parameterized, TensorView};
use crate::error::{shape_err, Error, Result};

/// Non-negative per-(direction, bin) powers, bin-major: `k * directions + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LookDirectionPowerMap {
    pub directions: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl LookDirectionPowerMap {
    pub fn new(directions: usize, bins: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != directions * bins {
            return shape_err(format!(
                "power map needs {directions}x{bins} values, got {}",
                values.len()
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidConfig("power map entries must be >= 0".into()));
        }
        Ok(Self {
            directions,
            bins,
            values,
        })
    }

    pub fn get(&self, direction: usize, bin: usize) -> f64 {
        self.values[bin * self.directions + direction]
    }

    pub fn column(&self, bin: usize) -> &[f64] {
        &self.values[bin * self.directions..(bin + 1) * self.directions]
    }
}

/// `Z(w_k)`, one value per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSpectrumFeature {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Average,
    Max,
}

/// Frequency aligned network: `N` real filters over the `D` look-direction
/// powers of a bin, shared by every bin, pooled across filters. Output bin
/// `k` depends on input column `k` only.
#[derive(Debug, Clone, PartialEq)]
pub struct FanLayer {
    pub directions: usize,
    pub filters: usize,
    pub pooling: Pooling,
    /// `[filter][direction]`
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Winning filter per bin for max pooling; empty for average pooling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FanCache {
    pub argmax: Vec<usize>,
}

impl FanLayer {
    pub fn new(
        directions: usize,
        filters: usize,
        pooling: Pooling,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != directions * filters || biases.len() != filters {
            return shape_err(format!(
                "FAN {filters}x{directions} given {} weights and {} biases",
                weights.len(),
                biases.len()
            ));
        }
        Ok(Self {
            directions,
            filters,
            pooling,
            weights,
            biases,
        })
    }

    pub fn random<R: Rng + ?Sized>(directions: usize, filters: usize, pooling: Pooling, rng: &mut R) -> Self {
        Self {
            directions,
            filters,
            pooling,
            weights: uniform_init(rng, directions * filters, directions),
            biases: vec![0.0; filters],
        }
    }

    #[inline]
    fn filter_output(&self, n: usize, column: &[f64]) -> f64 {
        let w = &self.weights[n * self.directions..(n + 1) * self.directions];
        w.iter().zip(column).map(|(a, y)| a * y).sum::<f64>() + self.biases[n]
    }

    pub fn forward(&self, y: &LookDirectionPowerMap) -> Result<(PooledSpectrumFeature, FanCache)> {
        if y.directions != self.directions {
            return shape_err(format!(
                "FAN expects {} look directions, got {}",
                self.directions, y.directions
            ));
        }
        Ok(self.apply(&y.values, y.bins))
    }

    pub(crate) fn apply(&self, y: &[f64], bins: usize) -> (PooledSpectrumFeature, FanCache) {
        let n = self.filters as f64;
        let mut values = Vec::with_capacity(bins);
        let mut cache = FanCache::default();
        for k in 0..bins {
            let col = &y[k * self.directions..(k + 1) * self.directions];
            match self.pooling {
                Pooling::Average => {
                    let sum: f64 = (0..self.filters).map(|i| self.filter_output(i, col)).sum();
                    values.push(sum / n);
                }
                Pooling::Max => {
                    let (mut best, mut val) = (0, f64::NEG_INFINITY);
                    for i in 0..self.filters {
                        let v = self.filter_output(i, col);
                        if v > val {
                            best = i;
                            val = v;
                        }
                    }
                    cache.argmax.push(best);
                    values.push(val);
                }
            }
        }
        (PooledSpectrumFeature { values }, cache)
    }

    /// Accumulates parameter gradients and returns `dL/dY` (bin-major).
    pub fn backward(&self, y: &[f64], cache: &FanCache, grad_out: &[f64], grads: &mut FanLayer) -> Vec<f64> {
        let d = self.directions;
        let mut grad_in = vec![0.0; y.len()];
        for (k, &g) in grad_out.iter().enumerate() {
            let col = &y[k * d..(k + 1) * d];
            let gcol = &mut grad_in[k * d..(k + 1) * d];
            match self.pooling {
                Pooling::Average => {
                    let gn = g / self.filters as f64;
                    for n in 0..self.filters {
                        grads.biases[n] += gn;
                        for j in 0..d {
                            grads.weights[n * d + j] += gn * col[j];
                            gcol[j] += gn * self.weights[n * d + j];
                        }
                    }
                }
                Pooling::Max => {
                    let n = cache.argmax[k];
                    grads.biases[n] += g;
                    for j in 0..d {
                        grads.weights[n * d + j] += g * col[j];
                        gcol[j] += g * self.weights[n * d + j];
                    }
                }
            }
        }
        grad_in
    }
}

impl Parameterized for FanLayer {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        vec![
            TensorView {
                name: "weights".into(),
                shape: vec![self.filters, self.directions],
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
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, d: usize, k: usize) -> LookDirectionPowerMap {
        LookDirectionPowerMap::new(d, k, (0..d * k).map(|_| rng.random_range(0.0..4.0)).collect()).unwrap()
    }

    #[test]
    fn substitution_example() {
        let fan = FanLayer::new(2, 1, Pooling::Average, vec![0.5, 0.5], vec![0.0]).unwrap();
        let y = LookDirectionPowerMap::new(2, 1, vec![2.0, 4.0]).unwrap();
        assert_eq!(fan.forward(&y).unwrap().0.values, vec![3.0]);
    }

    #[test]
    fn zero_filters_pool_biases() {
        let b = vec![0.5, -1.0, 2.5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_map(&mut rng, 4, 6);
        let avg = FanLayer::new(4, 3, Pooling::Average, vec![0.0; 12], b.clone()).unwrap();
        let max = FanLayer::new(4, 3, Pooling::Max, vec![0.0; 12], b).unwrap();
        assert!(avg
            .forward(&y)
            .unwrap()
            .0
            .values
            .iter()
            .all(|&z| (z - 2.0 / 3.0).abs() < 1e-15));
        assert!(max.forward(&y).unwrap().0.values.iter().all(|&z| z == 2.5));
    }

    #[test]
    fn full_size_loop_oracle_and_isolation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (d, n, k) = (12, 24, 127);
        for pooling in [Pooling::Average, Pooling::Max] {
            let mut fan = FanLayer::random(d, n, pooling, &mut rng);
            fan.biases = uniform_init(&mut rng, n, 1);
            let y = random_map(&mut rng, d, k);
            let z = fan.forward(&y).unwrap().0.values;
            for kk in 0..k {
                let outs: Vec<f64> = (0..n)
                    .map(|nn| {
                        let mut acc = fan.biases[nn];
                        for dd in 0..d {
                            acc += fan.weights[nn * d + dd] * y.get(dd, kk);
                        }
                        acc
                    })
                    .collect();
                let expect = match pooling {
                    Pooling::Average => outs.iter().sum::<f64>() / n as f64,
                    Pooling::Max => outs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                };
                assert!((z[kk] - expect).abs() < 1e-12);
            }
            let mut y2 = y.clone();
            for dd in 0..d {
                y2.values[5 * d + dd] += 0.7 + dd as f64;
            }
            let z2 = fan.forward(&y2).unwrap().0.values;
            for kk in 0..k {
                if kk == 5 {
                    assert_ne!(z[kk], z2[kk]);
                } else {
                    assert_eq!(z[kk].to_bits(), z2[kk].to_bits());
                }
            }
        }
    }

    #[test]
    fn shape_and_sign_errors() {
        let fan = FanLayer::random(3, 2, Pooling::Max, &mut ChaCha8Rng::seed_from_u64(0));
        let y = LookDirectionPowerMap::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(fan.forward(&y).is_err());
        assert!(LookDirectionPowerMap::new(1, 1, vec![-1.0]).is_err());
        assert!(FanLayer::new(2, 2, Pooling::Max, vec![0.0; 3], vec![0.0; 2]).is_err());
    }

    #[test]
    fn parameter_count_is_nd_plus_n() {
        let fan = FanLayer::random(12, 24, Pooling::Average, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(fan.num_parameters(), 12 * 24 + 24);
        assert_eq!(fan.num_parameters(), 312);
    }

    proptest! {
        #[test]
        fn average_is_linear_without_bias(seed in 0u64..500, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fan = FanLayer::random(5, 4, Pooling::Average, &mut rng);
            let (a, b) = (random_map(&mut rng, 5, 7), random_map(&mut rng, 5, 7));
            let mix: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| alpha * x + beta * y).collect();
            let zm = fan.apply(&mix, 7).0.values;
            let (za, zb) = (fan.forward(&a).unwrap().0.values, fan.forward(&b).unwrap().0.values);
            for i in 0..7 {
                prop_assert!((zm[i] - alpha * za[i] - beta * zb[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn max_dominates_average(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut avg = FanLayer::random(6, 5, Pooling::Average, &mut rng);
            avg.biases = uniform_init(&mut rng, 5, 1);
            let max = FanLayer { pooling: Pooling::Max, ..avg.clone() };
            let y = random_map(&mut rng, 6, 9);
            let (za, zm) = (avg.forward(&y).unwrap().0.values, max.forward(&y).unwrap().0.values);
            for (a, m) in za.iter().zip(&zm) {
                prop_assert!(m + 1e-12 >= *a);
            }
        }
    }
}
