//! Synthetic multi-channel scenes: far-field band-limited targets, an
//! isotropic diffuse noise field and a near-field playback interferer.

mod corpus;

pub use corpus::{build_corpus, class_bands, synthesize_corpus, utterance_seed, CorpusReport, CorpusSpec, SubsetSpec};

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::array::{ArrayGeometry, LookDirection};
use crate::error::{Error, Result};

pub const FRACTIONAL_DELAY_TAPS: usize = 32;
pub const DEFAULT_DIFFUSE_WAVES: usize = 64;

/// Near-field interferer.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaybackSpec {
    /// Pass bands of the interfering signal, in Hz.
    pub bands: Vec<(f64, f64)>,
    pub interferer_class: usize,
    /// Power relative to the target, summed over channels.
    pub level_db: f64,
    /// Source position relative to the array centroid, in metres.
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub class_id: usize,
    pub target_direction: LookDirection,
    /// Pass bands of the target, in Hz.
    pub bands: Vec<(f64, f64)>,
    /// Target to diffuse-noise ratio; `+inf` renders no noise.
    pub snr_db: f64,
    pub playback: Option<PlaybackSpec>,
    pub duration_s: f64,
    /// RMS of the dry target source.
    pub target_rms: f64,
    pub diffuse_waves: usize,
    pub seed: u64,
}

/// Separately rendered components plus the clipped mixture, each `[mic][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneAudio {
    pub target: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub playback: Vec<Vec<f64>>,
    pub mixture: Vec<Vec<f64>>,
    pub clipped_samples: usize,
}

impl SceneAudio {
    pub fn unclipped_mixture(&self) -> Vec<Vec<f64>> {
        sum_tracks(&[&self.target, &self.noise, &self.playback])
    }
}

fn sum_tracks(tracks: &[&Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let mut out = tracks[0].clone();
    for t in &tracks[1..] {
        for (o, c) in out.iter_mut().zip(t.iter()) {
            for (a, b) in o.iter_mut().zip(c) {
                *a += b;
            }
        }
    }
    out
}

pub fn total_power(tracks: &[Vec<f64>]) -> f64 {
    tracks.iter().flatten().map(|v| v * v).sum()
}

/// `10 log10(sum target^2 / sum noise^2)` over all channels; `+inf` when the
/// noise is silent.
pub fn oracle_snr(target: &[Vec<f64>], noise: &[Vec<f64>]) -> Result<f64> {
    if target.len() != noise.len() || target.iter().zip(noise).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::InvalidScene("target and noise tracks differ in shape".into()));
    }
    let pn = total_power(noise);
    if pn == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (total_power(target) / pn).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SnrBucket {
    Low,
    Mid,
    High,
}

impl SnrBucket {
    pub const ALL: [SnrBucket; 3] = [SnrBucket::Low, SnrBucket::Mid, SnrBucket::High];

    pub fn of(snr_db: f64) -> Self {
        if snr_db <= 5.0 {
            SnrBucket::Low
        } else if snr_db <= 15.0 {
            SnrBucket::Mid
        } else {
            SnrBucket::High
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SnrBucket::Low => "<=5dB",
            SnrBucket::Mid => "5-15dB",
            SnrBucket::High => ">15dB",
        }
    }
}

/// Blackman-windowed sinc taps for a delay of `frac` in `[0, 1)` samples.
/// Tap `i` multiplies `x[t - n - (i - 15)]` for integer delay `n`.
pub fn fractional_delay_taps(frac: f64) -> [f64; FRACTIONAL_DELAY_TAPS] {
    let half = (FRACTIONAL_DELAY_TAPS / 2 - 1) as f64;
    let mut h = [0.0; FRACTIONAL_DELAY_TAPS];
    for (i, tap) in h.iter_mut().enumerate() {
        let q = i as f64 - half;
        let x = q - frac;
        let s = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
        // window centred on the fractional peak
        let phase = 2.0 * PI * (x + half + 1.0) / FRACTIONAL_DELAY_TAPS as f64;
        let w = 0.42 - 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos();
        *tap = s * w;
    }
    h
}

/// `y[t] = x(t + offset - delay)` for `t` in `0..len`, reading zeros outside
/// `x`.
pub fn delayed_read(x: &[f64], offset: usize, delay: f64, len: usize) -> Vec<f64> {
    let n = delay.floor();
    let frac = delay - n;
    let n = n as i64;
    let half = (FRACTIONAL_DELAY_TAPS / 2 - 1) as i64;
    let h = fractional_delay_taps(frac);
    let at = |i: i64| {
        if i >= 0 && (i as usize) < x.len() {
            x[i as usize]
        } else {
            0.0
        }
    };
    (0..len)
        .map(|t| {
            let base = t as i64 + offset as i64 - n;
            if frac == 0.0 {
                return at(base);
            }
            h.iter()
                .enumerate()
                .map(|(i, &c)| c * at(base - (i as i64 - half)))
                .sum()
        })
        .collect()
}

/// White Gaussian spectrum restricted to `bands`, returned as a real signal.
pub fn band_noise<R: Rng + ?Sized>(rng: &mut R, len: usize, sample_rate: f64, bands: &[(f64, f64)]) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    let mut spec = vec![Complex64::new(0.0, 0.0); len];
    for k in 1..len.div_ceil(2) {
        let f = k as f64 * sample_rate / len as f64;
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        if bands.iter().any(|&(lo, hi)| f >= lo && f < hi) {
            spec[k] = Complex64::new(re, im);
            spec[len - k] = spec[k].conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(len).process(&mut spec);
    spec.into_iter().map(|z| z.re).collect()
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }
}

/// Near-uniform points on the unit sphere.
pub fn fibonacci_sphere(count: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            [r * a.cos(), r * a.sin(), z]
        })
        .collect()
}

/// Sum of independent white plane waves from `waves` isotropic directions.
/// Delays are applied as phase shifts of one long FFT per microphone.
pub fn diffuse_noise<R: Rng + ?Sized>(
    rng: &mut R,
    geometry: &ArrayGeometry,
    waves: usize,
    len: usize,
    sample_rate: f64,
) -> Vec<Vec<f64>> {
    let pos = geometry.centered_positions();
    let m = pos.len();
    if len == 0 {
        return vec![Vec::new(); m];
    }
    let mut spec = vec![vec![Complex64::new(0.0, 0.0); len]; m];
    let half = len.div_ceil(2);
    for u in fibonacci_sphere(waves) {
        let tau: Vec<f64> = pos
            .iter()
            .map(|r| -(u[0] * r[0] + u[1] * r[1] + u[2] * r[2]) / geometry.speed_of_sound)
            .collect();
        for k in 1..half {
            let g = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            let omega = 2.0 * PI * k as f64 * sample_rate / len as f64;
            for (s, &t) in spec.iter_mut().zip(&tau) {
                s[k] += g * Complex64::from_polar(1.0, -omega * t);
            }
        }
    }
    let ifft = FftPlanner::new().plan_fft_inverse(len);
    spec.into_iter()
        .map(|mut s| {
            for k in 1..half {
                s[len - k] = s[k].conj();
            }
            ifft.process(&mut s);
            s.into_iter().map(|z| z.re).collect()
        })
        .collect()
}

/// Renders every component of `scene` on `geometry`.
pub fn synthesize_scene(scene: &SyntheticScene, geometry: &ArrayGeometry, sample_rate: f64) -> Result<SceneAudio> {
    if !(scene.duration_s > 0.0) || !scene.duration_s.is_finite() {
        return Err(Error::InvalidScene(format!(
            "duration must be positive, got {}",
            scene.duration_s
        )));
    }
    if scene.snr_db.is_nan() || scene.snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidScene(format!(
            "snr_db must be finite or +inf, got {}",
            scene.snr_db
        )));
    }
    let len = (scene.duration_s * sample_rate).round() as usize;
    let m = geometry.num_mics();
    let pos = geometry.centered_positions();
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let c = geometry.speed_of_sound;
    let max_extent = pos
        .iter()
        .map(|r| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt())
        .fold(0.0, f64::max);
    let pad = FRACTIONAL_DELAY_TAPS + (2.0 * (max_extent + 0.2) / c * sample_rate).ceil() as usize;

    let mut source = band_noise(&mut rng, len + 2 * pad, sample_rate, &scene.bands);
    let r = rms(&source);
    if r > 0.0 {
        source.iter_mut().for_each(|v| *v *= scene.target_rms / r);
    }
    let tau = geometry.delays(&scene.target_direction);
    let target: Vec<Vec<f64>> = tau
        .iter()
        .map(|t| delayed_read(&source, pad, t * sample_rate, len))
        .collect();
    let p_target = total_power(&target);

    let mut noise = vec![vec![0.0; len]; m];
    if scene.snr_db.is_finite() {
        if p_target == 0.0 {
            return Err(Error::UnsatisfiableSnr);
        }
        noise = diffuse_noise(&mut rng, geometry, scene.diffuse_waves.max(1), len, sample_rate);
        let p = total_power(&noise);
        let g = (p_target / (p * 10f64.powf(scene.snr_db / 10.0))).sqrt();
        noise.iter_mut().flatten().for_each(|v| *v *= g);
    }

    let mut playback = vec![vec![0.0; len]; m];
    if let Some(pb) = &scene.playback {
        if p_target == 0.0 {
            return Err(Error::UnsatisfiableSnr);
        }
        let src = band_noise(&mut rng, len + 2 * pad, sample_rate, &pb.bands);
        let dist: Vec<f64> = pos
            .iter()
            .map(|r| {
                ((r[0] - pb.position[0]).powi(2) + (r[1] - pb.position[1]).powi(2) + (r[2] - pb.position[2]).powi(2))
                    .sqrt()
            })
            .collect();
        let d0 = dist.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(d0 > 0.0) {
            return Err(Error::InvalidScene(
                "playback source coincides with a microphone".into(),
            ));
        }
        playback = dist
            .iter()
            .map(|&d| {
                let mut y = delayed_read(&src, pad, (d - d0) / c * sample_rate, len);
                y.iter_mut().for_each(|v| *v *= d0 / d);
                y
            })
            .collect();
        let p = total_power(&playback);
        if p > 0.0 {
            let g = (p_target * 10f64.powf(pb.level_db / 10.0) / p).sqrt();
            playback.iter_mut().flatten().for_each(|v| *v *= g);
        }
    }

    let mut mixture = sum_tracks(&[&target, &noise, &playback]);
    let mut clipped_samples = 0;
    for v in mixture.iter_mut().flatten() {
        if v.abs() > 1.0 {
            clipped_samples += 1;
            *v = v.clamp(-1.0, 1.0);
        }
    }
    Ok(SceneAudio {
        target,
        noise,
        playback,
        mixture,
        clipped_samples,
    })
}
