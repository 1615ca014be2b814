//! Seeded end-to-end comparison of all variants on one synthetic corpus.

use std::path::Path;
use std::time::Instant;

use fan_core::array::{
    select_diagonal_pair, superdirective_weights, ArrayGeometry, LookDirection, SuperdirectiveWeights,
};
use fan_core::dataset::{load_corpus, LoadedCorpus};
use fan_core::frontend::FrameConfig;
use fan_core::io::Split;
use fan_core::layers::VariantTag;
use fan_core::sim::{build_corpus, CorpusSpec};
use fan_core::train::{
    evaluate, finish_variant, pretrain_shared, MetricLog, ModelConfig, Route, TrainOptions, Utterance,
};
use fan_core::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TrendConfig {
    pub corpus: CorpusSpec,
    pub train: TrainOptions,
    pub model: ModelConfig,
    pub diagonal_loading: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSpec::default(),
            train: TrainOptions::default(),
            model: ModelConfig::default(),
            diagonal_loading: fan_core::array::DEFAULT_DIAGONAL_LOADING,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantScore {
    pub tag: VariantTag,
    pub accuracy: f64,
    pub playback_accuracy: f64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub scores: Vec<VariantScore>,
    pub seconds: f64,
}

impl SeedResult {
    pub fn score(&self, tag: VariantTag) -> &VariantScore {
        self.scores
            .iter()
            .find(|s| s.tag == tag)
            .expect("every variant is scored")
    }
}

pub struct Prepared {
    pub corpus: LoadedCorpus,
    pub sd: SuperdirectiveWeights,
    pub model: ModelConfig,
}

/// Synthesises the corpus under `dir` and loads the diagonal pair.
pub fn prepare(cfg: &TrendConfig, seed: u64, dir: &Path) -> Result<Prepared> {
    let mut spec = cfg.corpus.clone();
    spec.seed = seed;
    let geometry = ArrayGeometry::default();
    build_corpus(&spec, &geometry, dir)?;
    let (a, b) = select_diagonal_pair(&geometry)?;
    let frame = FrameConfig::default();
    let corpus = load_corpus(&dir.join("manifest.tsv"), &frame, &[a, b], None)?;
    let pair = geometry.subset(&[a, b])?;
    let dirs = LookDirection::uniform(cfg.model.mc.look_directions);
    let sd = superdirective_weights(&pair, &dirs, &frame.bin_omegas(), cfg.diagonal_loading)?;
    let mut model = cfg.model.clone();
    model.classes = spec.classes;
    Ok(Prepared { corpus, sd, model })
}

fn accuracy_on(p: &fan_core::train::Pipeline, utts: &[Utterance], filter: impl Fn(&Utterance) -> bool) -> Result<f64> {
    let subset: Vec<Utterance> = utts.iter().filter(|u| filter(u)).cloned().collect();
    if subset.is_empty() {
        return Ok(f64::NAN);
    }
    Ok(evaluate(p, &subset, Route::Full)?.accuracy)
}

/// Trains every variant with the same budget; stages 1 and 2 are shared.
pub fn run_seed(cfg: &TrendConfig, seed: u64, dir: &Path) -> Result<SeedResult> {
    let start = Instant::now();
    let prep = prepare(cfg, seed, dir)?;
    let train = prep.corpus.split(Split::Train);
    let dev = prep.corpus.split(Split::Dev);
    let test = prep.corpus.split(Split::Test);
    let opts = TrainOptions {
        seed,
        ..cfg.train.clone()
    };
    let mut log = MetricLog::default();
    let pre = pretrain_shared(&prep.model, train, dev, &opts, &mut log)?;
    let mut scores = Vec::new();
    for tag in VariantTag::ALL {
        let mut vlog = log.clone();
        let p = finish_variant(&pre, tag, &prep.model, Some(&prep.sd), train, dev, &opts, &mut vlog)?;
        scores.push(VariantScore {
            tag,
            accuracy: accuracy_on(&p, test, |_| true)?,
            playback_accuracy: accuracy_on(&p, test, |u| u.playback)?,
            dev_accuracy: vlog.rows.last().map_or(f64::NAN, |r| r.dev_accuracy),
        });
    }
    Ok(SeedResult {
        seed,
        scores,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Absolute tolerance under which a shortfall is treated as a tie.
pub const TIE_TOLERANCE: f64 = 0.005;

/// `a >= b` up to the tie tolerance.
pub fn not_worse(a: f64, b: f64) -> bool {
    a + TIE_TOLERANCE >= b
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendVerdict {
    pub name: String,
    pub agreeing_seeds: usize,
    pub seeds: usize,
}

impl TrendVerdict {
    pub fn holds(&self) -> bool {
        2 * self.agreeing_seeds > self.seeds
    }
}

/// The three comparisons, each decided by majority over seeds.
pub fn verdicts(results: &[SeedResult]) -> Vec<TrendVerdict> {
    let count = |f: &dyn Fn(&SeedResult) -> bool| results.iter().filter(|r| f(r)).count();
    let mc = VariantTag::ALL
        .iter()
        .copied()
        .filter(|t| t.is_multichannel())
        .collect::<Vec<_>>();
    vec![
        TrendVerdict {
            name: "bat-fan-avg >= bat-at (test accuracy)".into(),
            agreeing_seeds: count(&|r| {
                not_worse(
                    r.score(VariantTag::BatFanAvg).accuracy,
                    r.score(VariantTag::BatAt).accuracy,
                )
            }),
            seeds: results.len(),
        },
        TrendVerdict {
            name: "bat-fan-avg >= bat-fan-max (playback subset)".into(),
            agreeing_seeds: count(&|r| {
                not_worse(
                    r.score(VariantTag::BatFanAvg).playback_accuracy,
                    r.score(VariantTag::BatFanMax).playback_accuracy,
                )
            }),
            seeds: results.len(),
        },
        TrendVerdict {
            name: "every multi-channel variant >= raw1ch".into(),
            agreeing_seeds: count(&|r| {
                let base = r.score(VariantTag::Raw1ch).accuracy;
                mc.iter().all(|&t| not_worse(r.score(t).accuracy, base))
            }),
            seeds: results.len(),
        },
    ]
}
