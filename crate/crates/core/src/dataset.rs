//! Manifest-driven loading: WAV to pair spectra, GMVN over the training
//! split, then LFR stacking.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frontend::{
    gmvn_apply, lfr_stack, FrameConfig, FrameTransformer, GmvnAccumulator, GmvnStats, MultiChannelSpectrum,
};
use crate::io::{read_manifest, read_wav, ManifestEntry, Split};
use crate::train::Utterance;

/// Raw spectra of the selected microphones of one WAV file.
pub fn load_spectra(path: &Path, mics: &[usize], transformer: &FrameTransformer) -> Result<Vec<MultiChannelSpectrum>> {
    let (sr, pcm) = read_wav(path)?;
    if sr != transformer.config().sample_rate_hz {
        return Err(Error::Format(format!(
            "{}: sample rate {sr}, expected {}",
            path.display(),
            transformer.config().sample_rate_hz
        )));
    }
    let chosen: Vec<Vec<f64>> = mics
        .iter()
        .map(|&m| {
            pcm.get(m)
                .cloned()
                .ok_or_else(|| Error::Format(format!("{}: no channel {m}", path.display())))
        })
        .collect::<Result<_>>()?;
    transformer.transform(&chosen)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub entries: BTreeMap<Split, Vec<ManifestEntry>>,
    pub utterances: BTreeMap<Split, Vec<Utterance>>,
    pub stats: GmvnStats,
}

impl LoadedCorpus {
    pub fn split(&self, s: Split) -> &[Utterance] {
        self.utterances.get(&s).map_or(&[], Vec::as_slice)
    }

    pub fn split_entries(&self, s: Split) -> &[ManifestEntry] {
        self.entries.get(&s).map_or(&[], Vec::as_slice)
    }
}

/// Loads every utterance of `manifest` (paths relative to its directory).
/// Statistics are fitted on the training split unless `stats` is given.
pub fn load_corpus(
    manifest: &Path,
    cfg: &FrameConfig,
    mics: &[usize],
    stats: Option<&GmvnStats>,
) -> Result<LoadedCorpus> {
    load_corpus_where(manifest, cfg, mics, stats, |_| true)
}

/// As [`load_corpus`], keeping only entries accepted by `keep`.
pub fn load_corpus_where(
    manifest: &Path,
    cfg: &FrameConfig,
    mics: &[usize],
    stats: Option<&GmvnStats>,
    keep: impl Fn(&ManifestEntry) -> bool,
) -> Result<LoadedCorpus> {
    let root = manifest.parent().unwrap_or_else(|| Path::new("."));
    let entries: Vec<ManifestEntry> = read_manifest(manifest)?.into_iter().filter(|e| keep(e)).collect();
    let transformer = FrameTransformer::new(*cfg)?;
    let spectra: Vec<Vec<MultiChannelSpectrum>> = entries
        .par_iter()
        .map(|e| load_spectra(&root.join(&e.path), mics, &transformer))
        .collect::<Result<_>>()?;
    let stats = match stats {
        Some(s) => s.clone(),
        None => fit_stats(
            entries
                .iter()
                .zip(&spectra)
                .filter(|(e, _)| e.split == Split::Train)
                .map(|(_, s)| s.as_slice()),
            mics.len(),
            cfg.num_bins(),
        )?,
    };
    let mut by_split: BTreeMap<Split, Vec<ManifestEntry>> = BTreeMap::new();
    let mut utts: BTreeMap<Split, Vec<Utterance>> = BTreeMap::new();
    let normalized: Vec<Utterance> = entries
        .par_iter()
        .zip(spectra)
        .map(|(e, frames)| to_utterance(e, &frames, &stats, cfg.lfr_factor))
        .collect::<Result<_>>()?;
    for (e, u) in entries.into_iter().zip(normalized) {
        utts.entry(e.split).or_default().push(u);
        by_split.entry(e.split).or_default().push(e);
    }
    Ok(LoadedCorpus {
        entries: by_split,
        utterances: utts,
        stats,
    })
}

/// Per-utterance accumulators merged in manifest order.
pub fn fit_stats<'a, I>(utterances: I, channels: usize, bins: usize) -> Result<GmvnStats>
where
    I: Iterator<Item = &'a [MultiChannelSpectrum]>,
{
    let mut acc = GmvnAccumulator::new(channels, bins);
    for frames in utterances {
        let mut part = GmvnAccumulator::new(channels, bins);
        for f in frames {
            part.push(f)?;
        }
        acc.merge(&part)?;
    }
    if acc.count() == 0 {
        return Err(Error::EmptySplit(
            "no training frames for normalisation statistics".into(),
        ));
    }
    acc.finish(crate::frontend::DEFAULT_VARIANCE_FLOOR)
}

pub fn to_utterance(
    entry: &ManifestEntry,
    frames: &[MultiChannelSpectrum],
    stats: &GmvnStats,
    lfr: usize,
) -> Result<Utterance> {
    let norm: Vec<MultiChannelSpectrum> = frames.iter().map(|f| gmvn_apply(f, stats)).collect::<Result<_>>()?;
    Ok(Utterance {
        stacks: lfr_stack(&norm, lfr),
        label: entry.class_id,
        snr_db: entry.snr_db,
        playback: entry.playback,
    })
}
