use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{synthesize_scene, PlaybackSpec, SceneAudio, SnrBucket, SyntheticScene, DEFAULT_DIFFUSE_WAVES};
use crate::array::{ArrayGeometry, LookDirection};
use crate::error::{Error, Result};
use crate::fe::{hz_to_mel, mel_to_hz};
use crate::io::{write_manifest, write_wav, ManifestEntry, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub name: String,
    pub split: Split,
    pub utterances: usize,
    pub playback_fraction: f64,
}

/// Corpus recipe, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub seed: u64,
    pub classes: usize,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub snr_db_min: f64,
    pub snr_db_max: f64,
    pub playback_level_db_min: f64,
    pub playback_level_db_max: f64,
    pub playback_distance_m: f64,
    pub target_rms: f64,
    pub diffuse_waves: usize,
    pub band_fmin_hz: f64,
    pub band_fmax_hz: f64,
    pub subsets: Vec<SubsetSpec>,
}

impl Default for CorpusSpec {
    /// 600/150/150 utterances; each split pairs a mostly clean set with 10%
    /// playback and an all-playback set, 30% playback overall.
    fn default() -> Self {
        let mut subsets = Vec::new();
        for (split, n1, n2) in [(Split::Train, 467, 133), (Split::Dev, 117, 33), (Split::Test, 117, 33)] {
            subsets.push(SubsetSpec {
                name: "set1".into(),
                split,
                utterances: n1,
                playback_fraction: 0.1,
            });
            subsets.push(SubsetSpec {
                name: "set2".into(),
                split,
                utterances: n2,
                playback_fraction: 1.0,
            });
        }
        Self {
            seed: 0,
            classes: 6,
            duration_s: 0.5,
            sample_rate_hz: 16_000,
            snr_db_min: -5.0,
            snr_db_max: 25.0,
            playback_level_db_min: -5.0,
            playback_level_db_max: 10.0,
            playback_distance_m: 0.05,
            target_rms: 0.05,
            diffuse_waves: DEFAULT_DIFFUSE_WAVES,
            band_fmin_hz: 60.0,
            band_fmax_hz: 7600.0,
            subsets,
        }
    }
}

impl CorpusSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("corpus spec: {e}")))
    }

    pub fn total_utterances(&self) -> usize {
        self.subsets.iter().map(|s| s.utterances).sum()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.classes == 0 {
            return bad("corpus needs at least one class");
        }
        if !(self.duration_s > 0.0) {
            return bad("duration_s must be positive");
        }
        if !(self.snr_db_min <= self.snr_db_max) || !(self.playback_level_db_min <= self.playback_level_db_max) {
            return bad("ranges must have min <= max");
        }
        if self.subsets.iter().any(|s| !(0.0..=1.0).contains(&s.playback_fraction)) {
            return bad("playback_fraction must lie in [0, 1]");
        }
        let mut names: Vec<String> = self.subsets.iter().map(|s| format!("{}/{}", s.split, s.name)).collect();
        names.sort();
        names.dedup();
        if names.len() != self.subsets.len() {
            return bad("subset (split, name) pairs must be unique");
        }
        Ok(())
    }
}

/// Splits `[fmin, fmax]` into `2C` equal-mel bands; class `c` owns bands
/// `c` and `c + C`.
pub fn class_bands(class: usize, classes: usize, fmin: f64, fmax: f64) -> Vec<(f64, f64)> {
    let n = 2 * classes;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edge = |i: usize| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64);
    [class, class + classes]
        .iter()
        .map(|&b| (edge(b), edge(b + 1)))
        .collect()
}

/// Stream-separated seed for utterance `index`.
pub fn utterance_seed(corpus_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(corpus_seed);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusReport {
    pub entries: Vec<ManifestEntry>,
    pub clipped_samples: usize,
}

impl CorpusReport {
    /// Utterances per (split, SNR bucket, playback flag).
    pub fn bucket_counts(&self) -> BTreeMap<(Split, SnrBucket, bool), usize> {
        let mut m = BTreeMap::new();
        for e in &self.entries {
            *m.entry((e.split, SnrBucket::of(e.snr_db), e.playback)).or_insert(0) += 1;
        }
        m
    }
}

fn plan(spec: &CorpusSpec, geometry: &ArrayGeometry) -> Result<Vec<(ManifestEntry, SyntheticScene)>> {
    spec.validate()?;
    let pos = geometry.centered_positions();
    let r0 = pos
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty geometry".into()))?;
    let n0 = (r0[0] * r0[0] + r0[1] * r0[1] + r0[2] * r0[2]).sqrt();
    let dir = if n0 > 0.0 {
        [r0[0] / n0, r0[1] / n0, r0[2] / n0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let d = spec.playback_distance_m;
    let pb_pos = [r0[0] + d * dir[0], r0[1] + d * dir[1], r0[2] + d * dir[2]];
    let c = spec.classes;

    let mut out = Vec::with_capacity(spec.total_utterances());
    let mut index = 0usize;
    for (si, sub) in spec.subsets.iter().enumerate() {
        let n_pb = (sub.utterances as f64 * sub.playback_fraction).round() as usize;
        let mut flags: Vec<bool> = (0..sub.utterances).map(|i| i < n_pb).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(spec.seed);
        shuffle_rng.set_stream(u64::MAX - si as u64);
        flags.shuffle(&mut shuffle_rng);
        for (i, &pb) in flags.iter().enumerate() {
            let seed = utterance_seed(spec.seed, index);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let class_id = i % c;
            let azimuth = rng.random_range(0.0..360.0);
            let snr_db = rng.random_range(spec.snr_db_min..=spec.snr_db_max);
            let playback = if pb {
                let other = if c > 1 {
                    (class_id + 1 + rng.random_range(0..c - 1)) % c
                } else {
                    class_id
                };
                Some(PlaybackSpec {
                    bands: class_bands(other, c, spec.band_fmin_hz, spec.band_fmax_hz),
                    interferer_class: other,
                    level_db: rng.random_range(spec.playback_level_db_min..=spec.playback_level_db_max),
                    position: pb_pos,
                })
            } else {
                None
            };
            let scene = SyntheticScene {
                class_id,
                target_direction: LookDirection::from_degrees(azimuth),
                bands: class_bands(class_id, c, spec.band_fmin_hz, spec.band_fmax_hz),
                snr_db,
                playback,
                duration_s: spec.duration_s,
                target_rms: spec.target_rms,
                diffuse_waves: spec.diffuse_waves,
                seed: rng.random(),
            };
            let entry = ManifestEntry {
                path: format!("{}/{}_{:05}.wav", sub.split, sub.name, i),
                class_id,
                snr_db,
                playback: pb,
                split: sub.split,
            };
            out.push((entry, scene));
            index += 1;
        }
    }
    Ok(out)
}

/// Renders the corpus in memory. The manifest SNR is the realised
/// target-to-diffuse-noise ratio; playback is flagged separately.
pub fn synthesize_corpus(spec: &CorpusSpec, geometry: &ArrayGeometry) -> Result<Vec<(ManifestEntry, SceneAudio)>> {
    let planned = plan(spec, geometry)?;
    let sr = f64::from(spec.sample_rate_hz);
    planned
        .into_par_iter()
        .map(|(mut e, s)| {
            let audio = synthesize_scene(&s, geometry, sr)?;
            e.snr_db = super::oracle_snr(&audio.target, &audio.noise)?;
            Ok((e, audio))
        })
        .collect()
}

/// Writes one 16-bit WAV per utterance under `out_dir` and `manifest.tsv`.
pub fn build_corpus(spec: &CorpusSpec, geometry: &ArrayGeometry, out_dir: &Path) -> Result<CorpusReport> {
    let planned = plan(spec, geometry)?;
    let sr = f64::from(spec.sample_rate_hz);
    for split in [Split::Train, Split::Dev, Split::Test] {
        if planned.iter().any(|(e, _)| e.split == split) {
            std::fs::create_dir_all(out_dir.join(split.as_str()))?;
        }
    }
    let done: Vec<Result<(ManifestEntry, usize)>> = planned
        .into_par_iter()
        .map(|(mut e, s)| {
            let audio = synthesize_scene(&s, geometry, sr)?;
            e.snr_db = super::oracle_snr(&audio.target, &audio.noise)?;
            write_wav(&out_dir.join(&e.path), spec.sample_rate_hz, &audio.mixture)?;
            Ok((e, audio.clipped_samples))
        })
        .collect();
    let mut entries = Vec::with_capacity(done.len());
    let mut clipped_samples = 0;
    for d in done {
        let (e, c) = d?;
        clipped_samples += c;
        entries.push(e);
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("manifest.tsv"), write_manifest(&entries))?;
    Ok(CorpusReport {
        entries,
        clipped_samples,
    })
}
