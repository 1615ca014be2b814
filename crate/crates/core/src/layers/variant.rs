use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;

use super::{
    power_backward, power_op, prefixed, Affine, BatLayer, FanCache, FanLayer, Parameterized, Pooling, TensorView,
};
use crate::array::SuperdirectiveWeights;
use crate::error::{shape_err, Error, Result};
use crate::frontend::MultiChannelSpectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariantTag {
    Raw1ch,
    Raw2ch,
    FanMax,
    BatAt,
    BatFanMax,
    BatFanAvg,
}

impl VariantTag {
    pub const ALL: [VariantTag; 6] = [
        VariantTag::Raw1ch,
        VariantTag::Raw2ch,
        VariantTag::FanMax,
        VariantTag::BatAt,
        VariantTag::BatFanMax,
        VariantTag::BatFanAvg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantTag::Raw1ch => "raw1ch",
            VariantTag::Raw2ch => "raw2ch",
            VariantTag::FanMax => "fan-max",
            VariantTag::BatAt => "bat-at",
            VariantTag::BatFanMax => "bat-fan-max",
            VariantTag::BatFanAvg => "bat-fan-avg",
        }
    }

    pub fn to_byte(self) -> u8 {
        self as u8
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        Self::ALL
            .get(b as usize)
            .copied()
            .ok_or_else(|| Error::UnknownVariant(format!("byte {b}")))
    }

    pub fn uses_bat(self) -> bool {
        matches!(self, VariantTag::BatAt | VariantTag::BatFanMax | VariantTag::BatFanAvg)
    }

    pub fn uses_fan(self) -> bool {
        matches!(self, VariantTag::FanMax | VariantTag::BatFanMax | VariantTag::BatFanAvg)
    }

    /// Variants whose output bin `k` depends only on input bin `k`.
    pub fn is_frequency_aligned(self) -> bool {
        self.uses_fan()
    }

    pub fn is_multichannel(self) -> bool {
        self != VariantTag::Raw1ch
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.as_str().replace('-', "") == norm)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    /// Microphones fed to the module (the diagonal pair).
    pub channels: usize,
    pub bins: usize,
    pub look_directions: usize,
    pub fan_filters: usize,
    /// Allow random BAT weights when no superdirective design is supplied.
    pub random_bat_fallback: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            channels: 2,
            bins: 127,
            look_directions: 12,
            fan_filters: 24,
            random_bat_fallback: false,
        }
    }
}

/// One assembled multi-channel module. Which optional layers are present is
/// fixed by `tag`.
#[derive(Debug, Clone, PartialEq)]
pub struct McVariant {
    pub tag: VariantTag,
    pub channels: usize,
    pub bins: usize,
    pub bat: Option<BatLayer>,
    pub fan: Option<FanLayer>,
    pub affine: Option<Affine>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct McCache {
    input: Option<MultiChannelSpectrum>,
    pre_power: Vec<Complex64>,
    power: Vec<f64>,
    fan: FanCache,
}

impl McCache {
    pub fn power(&self) -> &[f64] {
        &self.power
    }
}

pub fn assemble_variant<R: Rng + ?Sized>(
    tag: VariantTag,
    cfg: &McConfig,
    init: Option<&SuperdirectiveWeights>,
    rng: &mut R,
) -> Result<McVariant> {
    let (m, k, d, n) = (cfg.channels, cfg.bins, cfg.look_directions, cfg.fan_filters);
    if m == 0 || k == 0 || d == 0 || n == 0 {
        return Err(Error::InvalidConfig("variant dimensions must be positive".into()));
    }
    let bat = if tag.uses_bat() {
        Some(match init {
            Some(sd) => {
                if sd.mics != m || sd.bins != k || sd.directions != d {
                    return shape_err(format!(
                        "superdirective design is {}x{}x{} (mics x bins x directions), config wants {m}x{k}x{d}",
                        sd.mics, sd.bins, sd.directions
                    ));
                }
                BatLayer::from_superdirective(sd)
            }
            None if cfg.random_bat_fallback => BatLayer::random(m, d, k, rng),
            None => {
                return Err(Error::InvalidConfig(format!(
                    "{tag} needs superdirective initial weights or random fallback"
                )))
            }
        })
    } else {
        None
    };
    let (fan, affine) = match tag {
        VariantTag::Raw1ch => (None, Some(Affine::random(k, k, rng))),
        VariantTag::Raw2ch => (None, Some(Affine::random(m * k, k, rng))),
        VariantTag::FanMax => (Some(FanLayer::random(m, n, Pooling::Max, rng)), None),
        VariantTag::BatAt => (None, Some(Affine::random(d * k, k, rng))),
        VariantTag::BatFanMax => (Some(FanLayer::random(d, n, Pooling::Max, rng)), None),
        VariantTag::BatFanAvg => (Some(FanLayer::random(d, n, Pooling::Average, rng)), None),
    };
    Ok(McVariant {
        tag,
        channels: m,
        bins: k,
        bat,
        fan,
        affine,
    })
}

impl McVariant {
    pub fn output_dim(&self) -> usize {
        self.bins
    }

    pub fn forward(&self, x: &MultiChannelSpectrum) -> Result<(Vec<f64>, McCache)> {
        let need = if self.tag == VariantTag::Raw1ch {
            1
        } else {
            self.channels
        };
        if x.bins != self.bins || x.channels < need || (self.tag != VariantTag::Raw1ch && x.channels != need) {
            return shape_err(format!(
                "{} expects {}x{} input, got {}x{}",
                self.tag, need, self.bins, x.channels, x.bins
            ));
        }
        let (k, m) = (self.bins, self.channels);
        let mut input = None;
        let pre_power: Vec<Complex64> = match self.tag {
            VariantTag::Raw1ch => x.channel(0).to_vec(),
            VariantTag::Raw2ch => x.data.clone(),
            // bin-major so the power map columns are (mic powers of one bin)
            VariantTag::FanMax => (0..k)
                .flat_map(|b| (0..m).map(move |c| (c, b)))
                .map(|(c, b)| x.get(c, b))
                .collect(),
            _ => {
                input = Some(x.clone());
                self.bat.as_ref().expect("bat layer").forward(x)?.values
            }
        };
        let power = power_op(&pre_power);
        let mut fan_cache = FanCache::default();
        let out = if let Some(fan) = &self.fan {
            let (z, c) = fan.apply(&power, k);
            fan_cache = c;
            z.values
        } else {
            self.affine.as_ref().expect("affine layer").apply(&power)
        };
        Ok((
            out,
            McCache {
                input,
                pre_power,
                power,
                fan: fan_cache,
            },
        ))
    }

    pub fn output(&self, x: &MultiChannelSpectrum) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&self, cache: &McCache, grad_out: &[f64], grads: &mut McVariant) {
        let need_power_grad = self.bat.is_some();
        let grad_power = if let Some(fan) = &self.fan {
            let g = grads.fan.as_mut().expect("fan grads");
            Some(fan.backward(&cache.power, &cache.fan, grad_out, g))
        } else {
            let g = grads.affine.as_mut().expect("affine grads");
            self.affine
                .as_ref()
                .expect("affine layer")
                .backward(&cache.power, grad_out, g, need_power_grad)
        };
        if let (Some(bat), Some(input)) = (&self.bat, &cache.input) {
            let grad_power = grad_power.expect("power gradient");
            let grad_bat = power_backward(&cache.pre_power, &grad_power);
            bat.backward(input, &grad_bat, grads.bat.as_mut().expect("bat grads"));
        }
    }
}

impl Parameterized for McVariant {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut v = Vec::new();
        if let Some(b) = &self.bat {
            v.extend(prefixed("bat", b.tensors()));
        }
        if let Some(f) = &self.fan {
            v.extend(prefixed("fan", f.tensors()));
        }
        if let Some(a) = &self.affine {
            v.extend(prefixed("affine", a.tensors()));
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        if let Some(b) = &mut self.bat {
            v.extend(b.tensors_mut());
        }
        if let Some(f) = &mut self.fan {
            v.extend(f.tensors_mut());
        }
        if let Some(a) = &mut self.affine {
            v.extend(a.tensors_mut());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCount {
    pub layer: String,
    pub weights: usize,
    pub biases: usize,
}

impl LayerCount {
    pub fn total(&self) -> usize {
        self.weights + self.biases
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterCount {
    pub tag: VariantTag,
    pub layers: Vec<LayerCount>,
}

impl ParameterCount {
    pub fn total(&self) -> usize {
        self.layers.iter().map(LayerCount::total).sum()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerCount> {
        self.layers.iter().find(|l| l.layer == name)
    }
}

/// Trainable real scalars per layer; complex parameters count twice.
pub fn parameter_count(variant: &McVariant) -> ParameterCount {
    let mut layers: Vec<LayerCount> = Vec::new();
    for t in variant.tensors() {
        let (layer, kind) = t.name.split_once('.').expect("layer.tensor name");
        let idx = match layers.iter().position(|l| l.layer == layer) {
            Some(i) => i,
            None => {
                layers.push(LayerCount {
                    layer: layer.to_string(),
                    weights: 0,
                    biases: 0,
                });
                layers.len() - 1
            }
        };
        if kind == "weights" {
            layers[idx].weights += t.data.len();
        } else {
            layers[idx].biases += t.data.len();
        }
    }
    ParameterCount {
        tag: variant.tag,
        layers,
    }
}
