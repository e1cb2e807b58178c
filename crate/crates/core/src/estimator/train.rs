use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{Modality, ModelInput, Trainable};
use super::optim::{adamw_step, AdamWConfig, AdamWState};
use super::schedule::LrSchedule;
use crate::cohort::GA_RANGE_DAYS;
use crate::error::{Error, Result};
use crate::imaging::{augment_clip, augment_frame, AugmentConfig};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

/// Optimisation settings for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Dropout keep probability on the hidden layer.
    pub keep_prob: f64,
    pub schedule: LrSchedule,
    pub max_steps: usize,
    pub augment: AugmentConfig,
    pub seed: u64,
}

/// Steps used by the desk-scale presets.
pub const DESK_STEPS: usize = 4000;
/// Initial learning rate of the desk presets; decays linearly to 1% of it.
pub const DESK_LR0: f64 = 4.6e-3;

impl TrainConfig {
    pub fn paper_image(seed: u64) -> Self {
        Self {
            batch_size: 8,
            optimizer: AdamWConfig::default(),
            keep_prob: 0.985,
            schedule: LrSchedule::PAPER_IMAGE,
            max_steps: 100_000,
            augment: AugmentConfig::paper_image(),
            seed,
        }
    }

    pub fn paper_video(seed: u64) -> Self {
        Self {
            keep_prob: 0.8,
            schedule: LrSchedule::PAPER_VIDEO,
            ..Self::paper_image(seed)
        }
    }

    /// Full-scale batch size and optimiser with a short linear schedule, no
    /// dropout and flip-only augmentation. The toy regressor has 16 hidden
    /// units, too few to survive the full-scale dropout rates.
    pub fn desk(modality: Modality, seed: u64) -> Self {
        let paper = match modality {
            Modality::Image => Self::paper_image(seed),
            Modality::Video => Self::paper_video(seed),
        };
        Self {
            keep_prob: 1.0,
            schedule: LrSchedule::Linear {
                lr0: DESK_LR0,
                lr_final: DESK_LR0 * 1e-2,
                total_steps: DESK_STEPS,
            },
            max_steps: DESK_STEPS,
            augment: AugmentConfig::desk(),
            ..paper
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::Config(format!("keep probability {} not in (0, 1]", self.keep_prob)));
        }
        if !self.schedule.is_valid() {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !self.augment.is_valid() {
            return Err(Error::Config("augmentation ranges are ill-ordered".into()));
        }
        Ok(())
    }
}

/// Indexed collection of (preprocessed input, GA in days) examples.
pub trait TrainingSet<T> {
    fn len(&self) -> usize;
    fn example(&self, index: usize) -> Result<(ModelInput<T>, f64)>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Clone> TrainingSet<T> for [(ModelInput<T>, f64)] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }

    fn example(&self, index: usize) -> Result<(ModelInput<T>, f64)> {
        Ok(self[index].clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Minibatch AdamW training on the mean-variance loss in label space.
///
/// Each step draws `batch_size` examples from a seeded epoch permutation,
/// augments them, averages the per-example gradients and applies one AdamW
/// update at `schedule.lr_at(step)`. Returns the mean batch loss per step.
pub fn train<T, M, D>(model: &mut M, data: &D, config: &TrainConfig) -> Result<Vec<StepRecord>>
where
    T: Scalar,
    M: Trainable<T>,
    D: TrainingSet<T> + ?Sized,
{
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let transform = model.transform();
    let mut rng = rng_from_seed(config.seed);
    let mut state = AdamWState::<T>::zeros_like(&model.parameter_sizes());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut curve = Vec::with_capacity(config.max_steps);
    let inv_batch = T::from_usize_lossy(config.batch_size).recip();

    for step in 0..config.max_steps {
        let mut grad_sum: Vec<Vec<T>> = model.parameter_sizes().iter().map(|&n| vec![T::zero(); n]).collect();
        let mut loss_sum = T::zero();
        for _ in 0..config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let (input, ga) = data.example(order[cursor])?;
            cursor += 1;
            if !(GA_RANGE_DAYS.0 as f64..=GA_RANGE_DAYS.1 as f64).contains(&ga) {
                return Err(Error::InvalidInput(format!("training label {ga} days outside the valid GA range")));
            }
            let input = match input {
                ModelInput::Image(f) => ModelInput::Image(augment_frame(&f, &config.augment, &mut rng)),
                ModelInput::Clip(c) => ModelInput::Clip(augment_clip(&c, &config.augment, &mut rng)),
            };
            let target = transform.forward(T::lit(ga))?;
            let (loss, grads) = model.loss_and_grad(&input, target, config.keep_prob, &mut rng)?;
            loss_sum = loss_sum + loss;
            for (acc, g) in grad_sum.iter_mut().zip(grads) {
                for (a, gi) in acc.iter_mut().zip(g) {
                    *a = *a + gi;
                }
            }
        }
        let loss = (loss_sum * inv_batch).to_f64_lossy();
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!("mean batch loss is {loss}"),
            });
        }
        for g in grad_sum.iter_mut().flatten() {
            *g = *g * inv_batch;
        }
        let lr: T = config.schedule.lr_at(step);
        let grad_refs: Vec<&[T]> = grad_sum.iter().map(Vec::as_slice).collect();
        adamw_step(&mut model.parameters_mut(), &grad_refs, &mut state, lr, &config.optimizer)?;
        curve.push(StepRecord {
            step,
            lr: lr.to_f64_lossy(),
            loss,
        });
    }
    Ok(curve)
}
