//! The small configuration used for finite-difference gradient checks:
//! two microphones, three look directions, five bins, two FAN filters,
//! three mel filters and two classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pipeline::{ModelConfig, Pipeline};
use crate::array::{superdirective_weights, ArrayGeometry, LookDirection};
use crate::error::Result;
use crate::frontend::{FrameConfig, LfrStack, MultiChannelSpectrum};
use crate::layers::{McConfig, Parameterized, VariantTag};
use crate::Complex64;

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        mc: McConfig {
            channels: 2,
            bins: 5,
            look_directions: 3,
            fan_filters: 2,
            random_bat_fallback: false,
        },
        mel_filters: 3,
        hidden: 6,
        classes: 2,
        lfr_factor: 3,
        ..ModelConfig::default()
    }
}

/// A pipeline whose parameters are jittered away from their structured
/// initial values, with FE and affine biases lifted so every unit is active.
pub fn tiny_pipeline(tag: VariantTag, seed: u64) -> Result<Pipeline> {
    let cfg = tiny_config();
    let frame = FrameConfig {
        fft_size: 12,
        window_len_samples: 12,
        hop_samples: 6,
        ..FrameConfig::default()
    };
    let g = ArrayGeometry::default().subset(&[0, 3])?;
    let sd = superdirective_weights(&g, &LookDirection::uniform(3), &frame.bin_omegas(), 1e-2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Pipeline::new(tag, &cfg, Some(&sd), &mut rng)?;
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    p.fe.biases.iter_mut().for_each(|b| *b = b.abs() + 0.5);
    if let Some(a) = &mut p.mc.affine {
        a.biases.iter_mut().for_each(|b| *b = b.abs() + 1.0);
    }
    Ok(p)
}

/// `n` random stacks with alternating labels.
pub fn tiny_batch(seed: u64, n: usize) -> Vec<(LfrStack, usize)> {
    let cfg = tiny_config();
    let (m, k) = (cfg.mc.channels, cfg.mc.bins);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let frames = (0..cfg.lfr_factor)
                .map(|f| {
                    let data = (0..m * k)
                        .map(|_| Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)))
                        .collect();
                    MultiChannelSpectrum::new(f, m, k, data).expect("tiny frame")
                })
                .collect();
            (LfrStack { frames }, i % cfg.classes)
        })
        .collect()
}
