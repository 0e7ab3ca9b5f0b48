//! SGD-with-momentum training steps, epoch sampling and evaluation.
//!
//! Everything here is IO-free; the file-driven training loop lives in the
//! `landseg` crate.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::archive::SamplePair;
use crate::checkpoint::ModelCheckpoint;
use crate::class::{LandCover, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::metrics::{iou_per_class, mean_iou_excluding, ConfusionMatrix};
use crate::model::{argmax_masks, SegNet};
use crate::ops::softmax_cross_entropy;
use crate::raster::images_to_tensor;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecay {
    /// Multiply the learning rate by `factor` every `every` steps.
    pub every: u64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    pub eval_interval: u64,
    pub seed: u64,
    pub ignore_unknown_in_loss: bool,
    pub lr_decay: Option<StepDecay>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            momentum: 0.9,
            batch_size: 4,
            max_steps: 500,
            eval_interval: 100,
            seed: 0,
            ignore_unknown_in_loss: false,
            lr_decay: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::Parameter(m));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.eval_interval == 0 {
            return bad("eval interval must be positive".into());
        }
        if self.max_steps > 0 && self.eval_interval > self.max_steps {
            return bad(format!(
                "eval interval {} exceeds max steps {}",
                self.eval_interval, self.max_steps
            ));
        }
        if let Some(d) = self.lr_decay {
            if d.every == 0 || !(d.factor > 0.0 && d.factor <= 1.0) {
                return bad("step decay needs every > 0 and factor in (0, 1]".into());
            }
        }
        Ok(())
    }

    /// Learning rate in effect for the step after `completed` steps.
    pub fn learning_rate_at(&self, completed: u64) -> f64 {
        match self.lr_decay {
            Some(d) => {
                let drops = (completed / d.every) as i32;
                self.learning_rate * num_traits::Float::powi(d.factor, drops)
            }
            None => self.learning_rate,
        }
    }

    pub fn ignore_class(&self) -> Option<u8> {
        self.ignore_unknown_in_loss.then_some(LandCover::Unknown as u8)
    }
}

/// Network weights plus optimizer state.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub step: u64,
    pub net: SegNet<T>,
    /// Momentum buffers (weight, bias), one pair per layer.
    pub velocity: Vec<(Vec<T>, Vec<T>)>,
    /// Exponential moving average of the training loss.
    pub running_loss: Option<f64>,
    pub best_miou: Option<f64>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(net: SegNet<T>) -> Self {
        let velocity = net
            .layers()
            .iter()
            .map(|l| (vec![T::zero(); l.weight.data().len()], vec![T::zero(); l.bias.len()]))
            .collect();
        TrainState {
            step: 0,
            net,
            velocity,
            running_loss: None,
            best_miou: None,
        }
    }

    pub fn from_checkpoint(checkpoint: &ModelCheckpoint) -> Result<Self> {
        let mut state = Self::new(SegNet::from_checkpoint(checkpoint)?);
        state.step = checkpoint.training_step;
        Ok(state)
    }

    pub fn checkpoint(&self) -> ModelCheckpoint {
        self.net.to_checkpoint(self.step)
    }
}

/// Batch input tensor and flattened targets.
pub fn batch_tensors<T: Scalar>(batch: &[&SamplePair]) -> Result<(crate::Tensor<T>, Vec<u8>)> {
    let images: Vec<_> = batch.iter().map(|p| &p.image).collect();
    let input = images_to_tensor(&images)?;
    let targets = batch
        .iter()
        .flat_map(|p| p.mask.classes().iter().copied())
        .collect();
    Ok((input, targets))
}

/// One forward/backward pass and momentum update:
/// `v ← μ·v + g`, `w ← w − lr·v`. Returns the batch loss.
pub fn train_step<T: Scalar>(state: &mut TrainState<T>, batch: &[&SamplePair], config: &TrainConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Parameter("training batch is empty".into()));
    }
    let (input, targets) = batch_tensors::<T>(batch)?;
    let (logits, trace) = state.net.forward_traced(&input)?;
    let out = softmax_cross_entropy(&logits, &targets, config.ignore_class())?;
    let loss = out.loss.as_f64();
    let step = state.step + 1;
    if !loss.is_finite() {
        return Err(Error::Divergence { step, loss });
    }
    let grads = state.net.backward(&trace, &out.grad)?;

    let lr = T::of_f64(config.learning_rate_at(state.step));
    let mu = T::of_f64(config.momentum);
    for ((layer, (vw, vb)), (gw, gb)) in state
        .net
        .layers_mut()
        .iter_mut()
        .zip(state.velocity.iter_mut())
        .zip(&grads.layers)
    {
        for ((w, v), &g) in layer.weight.data_mut().iter_mut().zip(vw.iter_mut()).zip(gw.data()) {
            *v = mu * *v + g;
            *w -= lr * *v;
        }
        for ((b, v), &g) in layer.bias.iter_mut().zip(vb.iter_mut()).zip(gb) {
            *v = mu * *v + g;
            *b -= lr * *v;
        }
    }
    state.step = step;
    state.running_loss = Some(match state.running_loss {
        Some(r) => 0.9 * r + 0.1 * loss,
        None => loss,
    });
    Ok(loss)
}

/// Draws batch indices without replacement, reshuffling at each epoch. The
/// last batch of an epoch may be short.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
    epoch: u64,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    pub fn new(len: usize, seed: u64) -> Self {
        EpochSampler {
            order: (0..len).collect(),
            pos: len,
            epoch: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_batch(&mut self, batch_size: usize) -> Vec<usize> {
        if self.order.is_empty() {
            return Vec::new();
        }
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let end = (self.pos + batch_size).min(self.order.len());
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub ignore_unknown_in_loss: bool,
    /// Leave the unknown class out of the mIoU average.
    pub exclude_unknown_from_miou: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub miou: f64,
    pub per_class: [Option<f64>; NUM_CLASSES],
    /// Pixel-weighted mean cross-entropy.
    pub loss: f64,
    pub pixel_accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub samples: usize,
}

/// Accumulates one confusion matrix and loss over evaluation tiles.
pub struct Evaluator<'a> {
    net: &'a SegNet<f32>,
    options: EvalOptions,
    confusion: ConfusionMatrix,
    loss_sum: f64,
    counted: usize,
    samples: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(net: &'a SegNet<f32>, options: EvalOptions) -> Self {
        Evaluator {
            net,
            options,
            confusion: ConfusionMatrix::new(),
            loss_sum: 0.0,
            counted: 0,
            samples: 0,
        }
    }

    pub fn add(&mut self, pair: &SamplePair) -> Result<()> {
        let (input, targets) = batch_tensors::<f32>(&[pair])?;
        let logits = self.net.forward(&input)?;
        let ignore = self.options.ignore_unknown_in_loss.then_some(LandCover::Unknown as u8);
        let out = softmax_cross_entropy(&logits, &targets, ignore)?;
        self.loss_sum += out.loss as f64 * out.counted as f64;
        self.counted += out.counted;
        let pred = argmax_masks(&logits)?.remove(0);
        self.confusion.accumulate(&pred, &pair.mask)?;
        self.samples += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<EvalReport> {
        if self.samples == 0 {
            return Err(Error::EmptyEvaluation("evaluation set has no samples".into()));
        }
        let per_class = iou_per_class(&self.confusion);
        let excluded: &[LandCover] = if self.options.exclude_unknown_from_miou {
            &[LandCover::Unknown]
        } else {
            &[]
        };
        Ok(EvalReport {
            miou: mean_iou_excluding(&per_class, excluded)?,
            per_class,
            loss: if self.counted > 0 {
                self.loss_sum / self.counted as f64
            } else {
                0.0
            },
            pixel_accuracy: self.confusion.pixel_accuracy().unwrap_or(0.0),
            confusion: self.confusion,
            samples: self.samples,
        })
    }
}

/// Scores `net` on every sample. Never modifies the weights.
pub fn evaluate<'p>(
    net: &SegNet<f32>,
    samples: impl IntoIterator<Item = &'p SamplePair>,
    options: EvalOptions,
) -> Result<EvalReport> {
    let mut ev = Evaluator::new(net, options);
    for s in samples {
        ev.add(s)?;
    }
    ev.finish()
}
