//! Heteroscedastic GA regressors: label transforms, the mean-variance loss,
//! AdamW, learning-rate schedules and the reference networks behind the
//! [`Predictor`] interface.

mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod schedule;
pub mod train;
pub mod transform;
pub mod weights;

use rayon::prelude::*;

pub use loss::{nll_grad, nll_loss, softplus, VAR_FLOOR};
pub use network::{
    ConvRegressor, ConvSpec, EstimatorOutput, MeanHead, Modality, ModelInput, NetArch, Predictor,
    Trainable,
};
pub use optim::{adamw_step, AdamWConfig, AdamWState};
pub use schedule::LrSchedule;
pub use train::{train, StepRecord, TrainConfig, TrainingSet, DESK_LR0, DESK_STEPS};
pub use transform::{LabelTransform, TransformKind};

use crate::aggregation::Estimate;
use crate::error::{Error, Result};
use crate::imaging::{Clip, Frame};
use crate::scalar::Scalar;

/// One media item preprocessed for a predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum PreparedMedia<T> {
    Image(Frame<T>),
    Video(Vec<Clip<T>>),
}

impl<T> PreparedMedia<T> {
    pub fn modality(&self) -> Modality {
        match self {
            PreparedMedia::Image(_) => Modality::Image,
            PreparedMedia::Video(_) => Modality::Video,
        }
    }
}

/// Runs `predictor` over every clip (or the single image) of `media` and maps
/// each output back to days. Results are ordered by clip start index, which
/// is also the returned index; `source` names the media item in each
/// estimate.
pub fn predict_media<T, P>(predictor: &P, media: &PreparedMedia<T>, source: &str) -> Result<Vec<(usize, Estimate<T>)>>
where
    T: Scalar,
    P: Predictor<T> + ?Sized,
{
    if media.modality() != predictor.modality() {
        return Err(Error::ModalityMismatch {
            expected: predictor.modality().to_string(),
            got: media.modality().to_string(),
        });
    }
    let transform = predictor.transform();
    let to_estimate = |index: usize, input: &ModelInput<T>| -> Result<(usize, Estimate<T>)> {
        let out = predictor.predict(input)?;
        let (mean, variance) = transform.inverse_with_variance(out.mu_t, out.var_t)?;
        Ok((index, Estimate::new(mean, variance, format!("{source}#{index}"))))
    };
    match media {
        PreparedMedia::Image(frame) => Ok(vec![to_estimate(0, &ModelInput::Image(frame.clone()))?]),
        PreparedMedia::Video(clips) => {
            let mut out = clips
                .par_iter()
                .map(|clip| to_estimate(clip.start, &ModelInput::Clip(clip.clone())))
                .collect::<Result<Vec<_>>>()?;
            out.sort_by_key(|(i, _)| *i);
            Ok(out)
        }
    }
}
