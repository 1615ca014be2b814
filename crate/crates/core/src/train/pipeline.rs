use rand::Rng;
use rayon::prelude::*;

use super::classifier::{cross_entropy, log_softmax, softmax, ClassifierCache, ToyClassifier};
use crate::array::SuperdirectiveWeights;
use crate::error::{Error, Result};
use crate::fe::{FeCache, FeLayer};
use crate::frontend::LfrStack;
use crate::layers::{
    assemble_variant, power_op, prefixed, McCache, McConfig, McVariant, Parameterized, TensorView, VariantTag,
};

/// Which front end feeds the FE layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Power of channel 0 goes straight into the FE layer.
    SingleChannel,
    /// The multi-channel module produces the FE input.
    Full,
}

/// Parameter groups that receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub mc: bool,
    pub fe: bool,
    pub classifier: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable {
        mc: true,
        fe: true,
        classifier: true,
    };
    pub const NONE: Trainable = Trainable {
        mc: false,
        fe: false,
        classifier: false,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub mc: McConfig,
    pub mel_filters: usize,
    pub sample_rate_hz: f64,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
    pub hidden: usize,
    pub classes: usize,
    pub lfr_factor: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mc: McConfig::default(),
            mel_filters: crate::fe::DEFAULT_MEL_FILTERS,
            sample_rate_hz: 16_000.0,
            fmin_hz: crate::fe::DEFAULT_FMIN_HZ,
            fmax_hz: crate::fe::DEFAULT_FMAX_HZ,
            log_floor: crate::fe::DEFAULT_LOG_FLOOR,
            hidden: super::classifier::DEFAULT_HIDDEN,
            classes: 6,
            lfr_factor: 3,
        }
    }
}

/// Multi-channel module, FE layer and classifier trained end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub mc: McVariant,
    pub fe: FeLayer,
    pub classifier: ToyClassifier,
    pub lfr_factor: usize,
}

/// One LFR stack with its class label.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub stack: &'a LfrStack,
    pub label: usize,
}

#[derive(Debug, Clone)]
struct FrameCache {
    mc: Option<McCache>,
    fe_input: Vec<f64>,
    fe: FeCache,
}

#[derive(Debug, Clone)]
pub struct ExampleCache {
    frames: Vec<FrameCache>,
    classifier: ClassifierCache,
    label: usize,
}

impl ExampleCache {
    pub fn logits(&self) -> &[f64] {
        &self.classifier.logits
    }

    /// Concatenated FE outputs of the stack.
    pub fn features(&self) -> &[f64] {
        &self.classifier.input
    }
}

/// Forward activations of a whole batch.
#[derive(Debug, Clone)]
pub struct BatchCache {
    pub examples: Vec<ExampleCache>,
    pub loss: f64,
}

/// Examples per parallel work item. Fixed so that the gradient sum does not
/// depend on the thread count.
pub const GRAD_CHUNK: usize = 4;

impl Pipeline {
    pub fn new<R: Rng + ?Sized>(
        tag: VariantTag,
        cfg: &ModelConfig,
        sd: Option<&SuperdirectiveWeights>,
        rng: &mut R,
    ) -> Result<Self> {
        let mc = assemble_variant(tag, &cfg.mc, sd, rng)?;
        let fe = FeLayer::mel(
            cfg.mc.bins,
            cfg.mel_filters,
            cfg.sample_rate_hz,
            cfg.fmin_hz,
            cfg.fmax_hz,
            cfg.log_floor,
        )?;
        if cfg.lfr_factor == 0 || cfg.classes == 0 || cfg.hidden == 0 {
            return Err(Error::InvalidConfig(
                "lfr factor, classes and hidden width must be positive".into(),
            ));
        }
        let classifier = ToyClassifier::random(cfg.lfr_factor * cfg.mel_filters, cfg.hidden, cfg.classes, rng);
        Ok(Self {
            mc,
            fe,
            classifier,
            lfr_factor: cfg.lfr_factor,
        })
    }

    pub fn tag(&self) -> VariantTag {
        self.mc.tag
    }

    pub fn classes(&self) -> usize {
        self.classifier.classes()
    }

    pub fn forward_example(&self, stack: &LfrStack, label: usize, route: Route) -> Result<ExampleCache> {
        if stack.len() != self.lfr_factor {
            return Err(Error::ShapeMismatch(format!(
                "LFR stack has {} frames, pipeline expects {}",
                stack.len(),
                self.lfr_factor
            )));
        }
        if label >= self.classes() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.classes(),
            });
        }
        let mut frames = Vec::with_capacity(stack.len());
        let mut features = Vec::with_capacity(stack.len() * self.fe.filters);
        for frame in &stack.frames {
            let (fe_input, mc) = match route {
                Route::SingleChannel => {
                    if frame.bins != self.fe.bins {
                        return Err(Error::ShapeMismatch(format!(
                            "frame has {} bins, FE expects {}",
                            frame.bins, self.fe.bins
                        )));
                    }
                    (power_op(frame.channel(0)), None)
                }
                Route::Full => {
                    let (z, c) = self.mc.forward(frame)?;
                    (z, Some(c))
                }
            };
            let (out, fe) = self.fe.forward(&fe_input)?;
            features.extend_from_slice(&out);
            frames.push(FrameCache { mc, fe_input, fe });
        }
        let classifier = self.classifier.forward(&features)?;
        if !classifier.logits.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("classifier logits".into()));
        }
        Ok(ExampleCache {
            frames,
            classifier,
            label,
        })
    }

    /// Mean cross-entropy of a batch, keeping activations for `backward`.
    pub fn forward_loss(&self, batch: &[Example<'_>], route: Route) -> Result<BatchCache> {
        if batch.is_empty() {
            return Err(Error::EmptySplit("empty batch".into()));
        }
        let mut examples = Vec::with_capacity(batch.len());
        let mut total = 0.0;
        for ex in batch {
            let c = self.forward_example(ex.stack, ex.label, route)?;
            total += cross_entropy(c.logits(), ex.label)?;
            examples.push(c);
        }
        Ok(BatchCache {
            examples,
            loss: total / batch.len() as f64,
        })
    }

    /// Gradients of the mean batch loss; frozen groups stay zero.
    pub fn backward(&self, cache: &BatchCache, trainable: Trainable) -> Pipeline {
        let mut grads = self.zeros_like();
        self.backward_into(cache, 1.0 / cache.examples.len() as f64, trainable, &mut grads);
        grads
    }

    fn backward_into(&self, cache: &BatchCache, scale: f64, trainable: Trainable, grads: &mut Pipeline) {
        let need_fe_input = trainable.mc;
        let need_features = trainable.fe || need_fe_input;
        let filters = self.fe.filters;
        for ex in &cache.examples {
            let mut g = softmax(ex.logits());
            g[ex.label] -= 1.0;
            g.iter_mut().for_each(|v| *v *= scale);
            let grad_features = self
                .classifier
                .backward(&ex.classifier, &g, &mut grads.classifier, need_features);
            let Some(grad_features) = grad_features else {
                continue;
            };
            for (f, frame) in ex.frames.iter().enumerate() {
                let go = &grad_features[f * filters..(f + 1) * filters];
                let gz = self.fe.backward(&frame.fe_input, &frame.fe, go, &mut grads.fe);
                if let (true, Some(mc)) = (need_fe_input, &frame.mc) {
                    self.mc.backward(mc, &gz, &mut grads.mc);
                }
            }
        }
        if !trainable.classifier {
            grads.classifier.zero_parameters();
        }
        if !trainable.fe {
            grads.fe.zero_parameters();
        }
    }

    /// Loss and gradients over fixed chunks evaluated in parallel and summed
    /// in chunk order.
    pub fn loss_and_grad(&self, batch: &[Example<'_>], route: Route, trainable: Trainable) -> Result<(f64, Pipeline)> {
        if batch.is_empty() {
            return Err(Error::EmptySplit("empty batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let parts: Vec<Result<(f64, Pipeline)>> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let cache = self.forward_loss(chunk, route)?;
                let mut g = self.zeros_like();
                self.backward_into(&cache, scale, trainable, &mut g);
                Ok((cache.loss * chunk.len() as f64, g))
            })
            .collect();
        let mut total = 0.0;
        let mut grads: Option<Pipeline> = None;
        for p in parts {
            let (l, g) = p?;
            total += l;
            match &mut grads {
                Some(acc) => acc.accumulate(&g),
                None => grads = Some(g),
            }
        }
        let loss = total * scale;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        Ok((loss, grads.expect("non-empty batch")))
    }

    /// Sum over stacks of the per-class log posteriors.
    pub fn utterance_scores(&self, stacks: &[LfrStack], route: Route) -> Result<Vec<f64>> {
        let mut scores = vec![0.0; self.classes()];
        for s in stacks {
            let c = self.forward_example(s, 0, route)?;
            for (acc, v) in scores.iter_mut().zip(log_softmax(c.logits())) {
                *acc += v;
            }
        }
        Ok(scores)
    }

    /// Names of tensors belonging to each group, in tensor order.
    pub fn tensor_groups(&self) -> Vec<Group> {
        let n_mc = self.mc.tensors().len();
        let n_fe = self.fe.tensors().len();
        let n_clf = self.classifier.tensors().len();
        std::iter::repeat_n(Group::Mc, n_mc)
            .chain(std::iter::repeat_n(Group::Fe, n_fe))
            .chain(std::iter::repeat_n(Group::Classifier, n_clf))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Mc,
    Fe,
    Classifier,
}

impl Group {
    pub fn enabled(self, t: Trainable) -> bool {
        match self {
            Group::Mc => t.mc,
            Group::Fe => t.fe,
            Group::Classifier => t.classifier,
        }
    }
}

impl Parameterized for Pipeline {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut v = prefixed("mc", self.mc.tensors());
        v.extend(prefixed("fe", self.fe.tensors()));
        v.extend(prefixed("classifier", self.classifier.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.mc.tensors_mut();
        v.extend(self.fe.tensors_mut());
        v.extend(self.classifier.tensors_mut());
        v
    }
}
