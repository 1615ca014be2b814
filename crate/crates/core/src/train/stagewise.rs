use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::classifier::cross_entropy;
use super::pipeline::{Example, ModelConfig, Pipeline, Route, Trainable};
use crate::array::SuperdirectiveWeights;
use crate::error::{Error, Result};
use crate::frontend::LfrStack;
use crate::layers::{Parameterized, VariantTag};

/// A normalised, LFR-stacked utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub stacks: Vec<LfrStack>,
    pub label: usize,
    pub snr_db: f64,
    pub playback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Classifier on log mel energies of channel 0.
    Classifier,
    /// FE layer and classifier on channel-0 power.
    FeClassifier,
    /// Everything, fed by the multi-channel module.
    Joint,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::Classifier => 1,
            Stage::FeClassifier => 2,
            Stage::Joint => 3,
        }
    }

    pub fn route(self) -> Route {
        match self {
            Stage::Joint => Route::Full,
            _ => Route::SingleChannel,
        }
    }

    /// Groups updated in a given epoch of this stage. With warm-up, the
    /// first epoch of stages 2 and 3 only touches the newly added group.
    pub fn trainable(self, epoch_in_stage: usize, warmup: bool) -> Trainable {
        let first = warmup && epoch_in_stage == 0;
        match self {
            Stage::Classifier => Trainable {
                mc: false,
                fe: false,
                classifier: true,
            },
            Stage::FeClassifier => Trainable {
                mc: false,
                fe: true,
                classifier: !first,
            },
            Stage::Joint => Trainable {
                mc: true,
                fe: !first,
                classifier: !first,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    /// Epochs for stages 1, 2 and 3.
    pub epochs: [usize; 3],
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub seed: u64,
    pub warmup_freeze: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: [3, 2, 3],
            adam: AdamConfig::default(),
            batch_size: 32,
            seed: 0,
            warmup_freeze: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub stage: u8,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricLog {
    pub rows: Vec<MetricRow>,
}

impl MetricLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,stage,train_loss,dev_loss,dev_accuracy\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6}",
                r.epoch, r.stage, r.train_loss, r.dev_loss, r.dev_accuracy
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Mean cross-entropy per stack.
    pub loss: f64,
    /// Fraction of utterances whose summed log posterior peaks at the label.
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

pub fn evaluate(pipeline: &Pipeline, utterances: &[Utterance], route: Route) -> Result<EvalResult> {
    if utterances.is_empty() {
        return Err(Error::EmptySplit("no utterances to evaluate".into()));
    }
    let per: Vec<Result<(f64, usize, usize)>> = utterances
        .par_iter()
        .map(|u| {
            let mut loss = 0.0;
            let mut scores = vec![0.0; pipeline.classes()];
            for s in &u.stacks {
                let c = pipeline.forward_example(s, u.label, route)?;
                loss += cross_entropy(c.logits(), u.label)?;
                for (acc, v) in scores.iter_mut().zip(super::classifier::log_softmax(c.logits())) {
                    *acc += v;
                }
            }
            let pred = argmax(&scores);
            Ok((loss, u.stacks.len(), pred))
        })
        .collect();
    let (mut loss, mut n, mut correct) = (0.0, 0usize, 0usize);
    let mut predictions = Vec::with_capacity(utterances.len());
    for (u, r) in utterances.iter().zip(per) {
        let (l, k, p) = r?;
        loss += l;
        n += k;
        correct += usize::from(p == u.label);
        predictions.push(p);
    }
    if n == 0 {
        return Err(Error::EmptySplit("utterances have no LFR stacks".into()));
    }
    let loss = loss / n as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("evaluation loss".into()));
    }
    Ok(EvalResult {
        loss,
        accuracy: correct as f64 / utterances.len() as f64,
        predictions,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn stage_seed(seed: u64, stage: Stage) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ u64::from(stage.number())
}

/// Runs `epochs` epochs of one stage with a fresh optimiser.
pub fn train_stage(
    pipeline: &mut Pipeline,
    stage: Stage,
    epochs: usize,
    train: &[Utterance],
    dev: &[Utterance],
    opts: &TrainOptions,
    log: &mut MetricLog,
) -> Result<()> {
    if opts.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut index: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .flat_map(|(u, utt)| (0..utt.stacks.len()).map(move |s| (u, s)))
        .collect();
    if index.is_empty() {
        return Err(Error::EmptySplit("training split has no LFR stacks".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(opts.seed, stage));
    let mut state = AdamState::new(pipeline);
    let groups = pipeline.tensor_groups();
    let route = stage.route();
    let first_epoch = log.rows.len() + 1;
    for e in 0..epochs {
        let trainable = stage.trainable(e, opts.warmup_freeze);
        let active: Vec<bool> = groups.iter().map(|g| g.enabled(trainable)).collect();
        index.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in index.chunks(opts.batch_size) {
            let batch: Vec<Example<'_>> = chunk
                .iter()
                .map(|&(u, s)| Example {
                    stack: &train[u].stacks[s],
                    label: train[u].label,
                })
                .collect();
            let (loss, grads) = pipeline.loss_and_grad(&batch, route, trainable)?;
            adam_step(pipeline, &grads, &mut state, &opts.adam, &active);
            total += loss * batch.len() as f64;
        }
        if !pipeline.all_finite() {
            return Err(Error::NonFinite(format!(
                "parameters after stage {} epoch {}",
                stage.number(),
                e + 1
            )));
        }
        let dev_eval = evaluate(pipeline, dev, route)?;
        log.rows.push(MetricRow {
            epoch: first_epoch + e,
            stage: stage.number(),
            train_loss: total / index.len() as f64,
            dev_loss: dev_eval.loss,
            dev_accuracy: dev_eval.accuracy,
        });
    }
    Ok(())
}

/// Stages 1 and 2, which do not depend on the multi-channel variant.
pub fn pretrain_shared(
    cfg: &ModelConfig,
    train: &[Utterance],
    dev: &[Utterance],
    opts: &TrainOptions,
    log: &mut MetricLog,
) -> Result<Pipeline> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut p = Pipeline::new(VariantTag::Raw1ch, cfg, None, &mut rng)?;
    train_stage(&mut p, Stage::Classifier, opts.epochs[0], train, dev, opts, log)?;
    train_stage(&mut p, Stage::FeClassifier, opts.epochs[1], train, dev, opts, log)?;
    Ok(p)
}

/// Attaches a freshly initialised `tag` module to a pretrained FE layer and
/// classifier, then runs stage 3.
#[allow(clippy::too_many_arguments)]
pub fn finish_variant(
    pretrained: &Pipeline,
    tag: VariantTag,
    cfg: &ModelConfig,
    sd: Option<&SuperdirectiveWeights>,
    train: &[Utterance],
    dev: &[Utterance],
    opts: &TrainOptions,
    log: &mut MetricLog,
) -> Result<Pipeline> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (0xA5A5 + u64::from(tag.to_byte())));
    let mut p = Pipeline::new(tag, cfg, sd, &mut rng)?;
    p.fe = pretrained.fe.clone();
    p.classifier = pretrained.classifier.clone();
    train_stage(&mut p, Stage::Joint, opts.epochs[2], train, dev, opts, log)?;
    Ok(p)
}

pub fn train_stagewise(
    tag: VariantTag,
    cfg: &ModelConfig,
    sd: Option<&SuperdirectiveWeights>,
    train: &[Utterance],
    dev: &[Utterance],
    opts: &TrainOptions,
) -> Result<(Pipeline, MetricLog)> {
    let mut log = MetricLog::default();
    let pre = pretrain_shared(cfg, train, dev, opts, &mut log)?;
    let p = finish_variant(&pre, tag, cfg, sd, train, dev, opts, &mut log)?;
    Ok((p, log))
}
