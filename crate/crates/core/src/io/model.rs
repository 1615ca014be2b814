use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, CheckpointTensor};
use crate::error::{Error, Result};
use crate::frontend::{FrameConfig, GmvnStats, WindowKind};
use crate::layers::{McConfig, Parameterized};
use crate::train::{ModelConfig, Pipeline};

/// Everything needed to run a trained pipeline on raw audio.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub pipeline: Pipeline,
    pub config: ModelConfig,
    pub frame: FrameConfig,
    pub mics: Vec<usize>,
    pub stats: GmvnStats,
}

impl SavedModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let f = &self.frame;
        let mut meta: Vec<(String, f64)> = [
            ("mc.channels", c.mc.channels as f64),
            ("mc.bins", c.mc.bins as f64),
            ("mc.look_directions", c.mc.look_directions as f64),
            ("mc.fan_filters", c.mc.fan_filters as f64),
            (
                "mc.random_bat_fallback",
                if c.mc.random_bat_fallback { 1.0 } else { 0.0 },
            ),
            ("fe.mel_filters", c.mel_filters as f64),
            ("fe.sample_rate_hz", c.sample_rate_hz),
            ("fe.fmin_hz", c.fmin_hz),
            ("fe.fmax_hz", c.fmax_hz),
            ("fe.log_floor", c.log_floor),
            ("classifier.hidden", c.hidden as f64),
            ("classifier.classes", c.classes as f64),
            ("lfr_factor", c.lfr_factor as f64),
            ("frame.sample_rate_hz", f64::from(f.sample_rate_hz)),
            ("frame.window_len", f.window_len_samples as f64),
            ("frame.hop", f.hop_samples as f64),
            ("frame.fft_size", f.fft_size as f64),
            ("frame.lfr_factor", f.lfr_factor as f64),
            ("frame.window", if f.window == WindowKind::Hann { 0.0 } else { 1.0 }),
            ("gmvn.frames", self.stats.frame_count as f64),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        for (i, m) in self.mics.iter().enumerate() {
            meta.push((format!("mic.{i}"), *m as f64));
        }
        let mut tensors: Vec<CheckpointTensor> = self
            .pipeline
            .tensors()
            .into_iter()
            .map(|t| CheckpointTensor {
                name: t.name,
                shape: t.shape,
                data: t.data.iter().map(|&v| v as f32).collect(),
            })
            .collect();
        let shape = vec![self.stats.channels, self.stats.bins, 2];
        for (name, data) in [("gmvn.mean", &self.stats.mean), ("gmvn.variance", &self.stats.variance)] {
            tensors.push(CheckpointTensor {
                name: name.into(),
                shape: shape.clone(),
                data: data.iter().map(|&v| v as f32).collect(),
            });
        }
        Checkpoint {
            tag: self.pipeline.tag(),
            meta,
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let int = |k: &str| -> Result<usize> {
            let v = ckpt.meta(k)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Format(format!("checkpoint field {k} is not a count")));
            }
            Ok(v as usize)
        };
        let config = ModelConfig {
            mc: McConfig {
                channels: int("mc.channels")?,
                bins: int("mc.bins")?,
                look_directions: int("mc.look_directions")?,
                fan_filters: int("mc.fan_filters")?,
                random_bat_fallback: int("mc.random_bat_fallback")? != 0,
            },
            mel_filters: int("fe.mel_filters")?,
            sample_rate_hz: ckpt.meta("fe.sample_rate_hz")?,
            fmin_hz: ckpt.meta("fe.fmin_hz")?,
            fmax_hz: ckpt.meta("fe.fmax_hz")?,
            log_floor: ckpt.meta("fe.log_floor")?,
            hidden: int("classifier.hidden")?,
            classes: int("classifier.classes")?,
            lfr_factor: int("lfr_factor")?,
        };
        let frame = FrameConfig {
            sample_rate_hz: int("frame.sample_rate_hz")? as u32,
            window_len_samples: int("frame.window_len")?,
            hop_samples: int("frame.hop")?,
            fft_size: int("frame.fft_size")?,
            lfr_factor: int("frame.lfr_factor")?,
            window: if int("frame.window")? == 0 {
                WindowKind::Hann
            } else {
                WindowKind::Rectangular
            },
        };
        frame.validate()?;
        let mics = (0..config.mc.channels)
            .map(|i| int(&format!("mic.{i}")))
            .collect::<Result<Vec<_>>>()?;
        let mut shell = config.clone();
        shell.mc.random_bat_fallback = true;
        let mut pipeline = Pipeline::new(ckpt.tag, &shell, None, &mut ChaCha8Rng::seed_from_u64(0))?;
        let names: Vec<(String, Vec<usize>)> = pipeline.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
        for ((name, shape), dst) in names.iter().zip(pipeline.tensors_mut()) {
            let t = ckpt.tensor(name)?;
            if t.shape != *shape {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            for (d, s) in dst.iter_mut().zip(&t.data) {
                *d = f64::from(*s);
            }
        }
        let mean = ckpt.tensor("gmvn.mean")?;
        let variance = ckpt.tensor("gmvn.variance")?;
        if mean.shape.len() != 3 || mean.shape != variance.shape {
            return Err(Error::Format(
                "normalisation statistics have inconsistent shapes".into(),
            ));
        }
        let stats = GmvnStats {
            channels: mean.shape[0],
            bins: mean.shape[1],
            mean: mean.data.iter().map(|&v| f64::from(v)).collect(),
            variance: variance.data.iter().map(|&v| f64::from(v)).collect(),
            frame_count: int("gmvn.frames")?,
        };
        Ok(Self {
            pipeline,
            config,
            frame,
            mics,
            stats,
        })
    }
}
