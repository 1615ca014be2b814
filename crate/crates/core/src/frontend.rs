//! Framing, DFT feature extraction, global mean/variance normalisation and
//! low-frame-rate stacking.
//!
//! A frame of `window_len_samples` is windowed, zero-padded at the end to
//! `fft_size`, transformed, and trimmed to bins `1..fft_size/2` so the DC and
//! Nyquist components never reach the network. With the defaults that is
//! 127 complex bins per channel, i.e. a 254-dimensional real feature.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WindowKind {
    /// Periodic Hann.
    #[default]
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub sample_rate_hz: u32,
    pub window_len_samples: usize,
    pub hop_samples: usize,
    pub fft_size: usize,
    pub lfr_factor: usize,
    pub window: WindowKind,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            window_len_samples: 200,
            hop_samples: 160,
            fft_size: 256,
            lfr_factor: 3,
            window: WindowKind::Hann,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < 4 {
            return Err(Error::InvalidConfig(format!(
                "fft_size {} is not a power of two >= 4",
                self.fft_size
            )));
        }
        if self.window_len_samples == 0 || self.window_len_samples > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "window length {} must be in 1..={}",
                self.window_len_samples, self.fft_size
            )));
        }
        if self.hop_samples == 0 || self.lfr_factor == 0 {
            return Err(Error::InvalidConfig("hop and lfr factor must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of retained bins, `fft_size/2 - 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 - 1
    }

    /// Centre frequency in Hz of retained bin `k` (0-based, DC already removed).
    pub fn bin_frequency_hz(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.sample_rate_hz as f64 / self.fft_size as f64
    }

    /// Angular frequencies of all retained bins.
    pub fn bin_omegas(&self) -> Vec<f64> {
        (0..self.num_bins())
            .map(|k| 2.0 * PI * self.bin_frequency_hz(k))
            .collect()
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_len_samples {
            0
        } else {
            (len - self.window_len_samples) / self.hop_samples + 1
        }
    }
}

/// Complex DFT bins of one frame for `channels` microphones, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelSpectrum {
    pub frame_index: usize,
    pub channels: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl MultiChannelSpectrum {
    pub fn zeros(frame_index: usize, channels: usize, bins: usize) -> Self {
        Self {
            frame_index,
            channels,
            bins,
            data: vec![Complex64::new(0.0, 0.0); channels * bins],
        }
    }

    pub fn new(frame_index: usize, channels: usize, bins: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != channels * bins {
            return shape_err(format!(
                "spectrum data has {} values, expected {channels}x{bins}",
                data.len()
            ));
        }
        Ok(Self {
            frame_index,
            channels,
            bins,
            data,
        })
    }

    #[inline]
    pub fn get(&self, channel: usize, bin: usize) -> Complex64 {
        self.data[channel * self.bins + bin]
    }

    #[inline]
    pub fn get_mut(&mut self, channel: usize, bin: usize) -> &mut Complex64 {
        &mut self.data[channel * self.bins + bin]
    }

    pub fn channel(&self, channel: usize) -> &[Complex64] {
        &self.data[channel * self.bins..(channel + 1) * self.bins]
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(channels.len() * self.bins);
        for &c in channels {
            if c >= self.channels {
                return shape_err(format!("channel {c} out of range ({})", self.channels));
            }
            data.extend_from_slice(self.channel(c));
        }
        Ok(Self {
            frame_index: self.frame_index,
            channels: channels.len(),
            bins: self.bins,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Reusable framing + FFT state for one [`FrameConfig`].
pub struct FrameTransformer {
    cfg: FrameConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl FrameTransformer {
    pub fn new(cfg: FrameConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg,
            window: cfg.window.coefficients(cfg.window_len_samples),
            fft,
        })
    }

    pub fn config(&self) -> &FrameConfig {
        &self.cfg
    }

    /// Full `fft_size`-point spectrum of the windowed, zero-padded segment
    /// starting at the beginning of `samples`.
    pub fn full_spectrum(&self, samples: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.cfg.fft_size];
        for (b, (&x, &w)) in buf.iter_mut().zip(samples.iter().zip(&self.window)) {
            b.re = x * w;
        }
        self.fft.process(&mut buf);
        buf
    }

    pub fn transform(&self, pcm: &[Vec<f64>]) -> Result<Vec<MultiChannelSpectrum>> {
        let channels = pcm.len();
        if channels == 0 {
            return shape_err("no channels");
        }
        let len = pcm[0].len();
        for (c, ch) in pcm.iter().enumerate() {
            if ch.len() != len {
                return Err(Error::RaggedChannels {
                    expected: len,
                    channel: c,
                    found: ch.len(),
                });
            }
            if ch.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("pcm channel {c}")));
            }
        }
        let bins = self.cfg.num_bins();
        let n_frames = self.cfg.frame_count(len);
        let mut frames = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let start = t * self.cfg.hop_samples;
            let mut frame = MultiChannelSpectrum::zeros(t, channels, bins);
            for (c, ch) in pcm.iter().enumerate() {
                let spec = self.full_spectrum(&ch[start..start + self.cfg.window_len_samples]);
                frame.data[c * bins..(c + 1) * bins].copy_from_slice(&spec[1..=bins]);
            }
            frames.push(frame);
        }
        Ok(frames)
    }
}

/// Frames every channel and returns one spectrum per frame.
///
/// Inputs shorter than one window yield an empty sequence.
pub fn frame_and_transform(pcm: &[Vec<f64>], cfg: &FrameConfig) -> Result<Vec<MultiChannelSpectrum>> {
    FrameTransformer::new(*cfg)?.transform(pcm)
}

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;

/// Per-channel, per-component (real and imaginary tracked separately)
/// normalisation statistics. Both vectors are laid out `[channel][bin][re, im]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmvnStats {
    pub channels: usize,
    pub bins: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub frame_count: usize,
}

/// Streaming Welford accumulator; partial accumulators merge associatively.
#[derive(Debug, Clone)]
pub struct GmvnAccumulator {
    channels: usize,
    bins: usize,
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl GmvnAccumulator {
    pub fn new(channels: usize, bins: usize) -> Self {
        Self {
            channels,
            bins,
            count: 0,
            mean: vec![0.0; 2 * channels * bins],
            m2: vec![0.0; 2 * channels * bins],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, frame: &MultiChannelSpectrum) -> Result<()> {
        if frame.channels != self.channels || frame.bins != self.bins {
            return shape_err(format!(
                "frame {}x{} does not match accumulator {}x{}",
                frame.channels, frame.bins, self.channels, self.bins
            ));
        }
        self.count += 1;
        let n = self.count as f64;
        for (i, z) in frame.data.iter().enumerate() {
            for (j, x) in [z.re, z.im].into_iter().enumerate() {
                let idx = 2 * i + j;
                let delta = x - self.mean[idx];
                self.mean[idx] += delta / n;
                self.m2[idx] += delta * (x - self.mean[idx]);
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &GmvnAccumulator) -> Result<()> {
        if other.channels != self.channels || other.bins != self.bins {
            return shape_err("cannot merge accumulators of different shapes");
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finish(&self, variance_floor: f64) -> Result<GmvnStats> {
        if self.count < 2 {
            return Err(Error::InsufficientStatistics(self.count));
        }
        let n = self.count as f64;
        Ok(GmvnStats {
            channels: self.channels,
            bins: self.bins,
            mean: self.mean.clone(),
            variance: self.m2.iter().map(|m| (m / n).max(variance_floor)).collect(),
            frame_count: self.count,
        })
    }
}

pub fn gmvn_fit(frames: &[MultiChannelSpectrum]) -> Result<GmvnStats> {
    gmvn_fit_with_floor(frames, DEFAULT_VARIANCE_FLOOR)
}

pub fn gmvn_fit_with_floor(frames: &[MultiChannelSpectrum], variance_floor: f64) -> Result<GmvnStats> {
    let first = frames.first().ok_or(Error::InsufficientStatistics(0))?;
    let mut acc = GmvnAccumulator::new(first.channels, first.bins);
    for f in frames {
        acc.push(f)?;
    }
    acc.finish(variance_floor)
}

impl GmvnStats {
    fn check(&self, frame: &MultiChannelSpectrum) -> Result<()> {
        if frame.channels != self.channels || frame.bins != self.bins {
            return shape_err(format!(
                "frame {}x{} does not match stats {}x{}",
                frame.channels, frame.bins, self.channels, self.bins
            ));
        }
        Ok(())
    }

    /// Mean and variance for `(channel, bin)` as (re, im) pairs.
    pub fn component(&self, channel: usize, bin: usize) -> ([f64; 2], [f64; 2]) {
        let i = 2 * (channel * self.bins + bin);
        (
            [self.mean[i], self.mean[i + 1]],
            [self.variance[i], self.variance[i + 1]],
        )
    }

    /// Restricts the statistics to the listed channels.
    pub fn select_channels(&self, channels: &[usize]) -> Result<GmvnStats> {
        let stride = 2 * self.bins;
        let mut mean = Vec::new();
        let mut variance = Vec::new();
        for &c in channels {
            if c >= self.channels {
                return shape_err(format!("channel {c} out of range"));
            }
            mean.extend_from_slice(&self.mean[c * stride..(c + 1) * stride]);
            variance.extend_from_slice(&self.variance[c * stride..(c + 1) * stride]);
        }
        Ok(GmvnStats {
            channels: channels.len(),
            bins: self.bins,
            mean,
            variance,
            frame_count: self.frame_count,
        })
    }
}

pub fn gmvn_apply(frame: &MultiChannelSpectrum, stats: &GmvnStats) -> Result<MultiChannelSpectrum> {
    stats.check(frame)?;
    let mut out = frame.clone();
    for (i, z) in out.data.iter_mut().enumerate() {
        let (m, v) = (&stats.mean[2 * i..2 * i + 2], &stats.variance[2 * i..2 * i + 2]);
        *z = Complex64::new((z.re - m[0]) / v[0].sqrt(), (z.im - m[1]) / v[1].sqrt());
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("gmvn output".into()));
    }
    Ok(out)
}

/// Inverse of [`gmvn_apply`] under the same statistics.
pub fn gmvn_invert(frame: &MultiChannelSpectrum, stats: &GmvnStats) -> Result<MultiChannelSpectrum> {
    stats.check(frame)?;
    let mut out = frame.clone();
    for (i, z) in out.data.iter_mut().enumerate() {
        let (m, v) = (&stats.mean[2 * i..2 * i + 2], &stats.variance[2 * i..2 * i + 2]);
        *z = Complex64::new(z.re * v[0].sqrt() + m[0], z.im * v[1].sqrt() + m[1]);
    }
    Ok(out)
}

/// `lfr_factor` consecutive frames fed to the network as parallel streams.
#[derive(Debug, Clone, PartialEq)]
pub struct LfrStack {
    pub frames: Vec<MultiChannelSpectrum>,
}

impl LfrStack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Groups frames into non-overlapping stacks of `lfr_factor`; a trailing
/// partial group is dropped.
pub fn lfr_stack(frames: &[MultiChannelSpectrum], lfr_factor: usize) -> Vec<LfrStack> {
    if lfr_factor == 0 {
        return Vec::new();
    }
    frames
        .chunks_exact(lfr_factor)
        .map(|c| LfrStack { frames: c.to_vec() })
        .collect()
}
