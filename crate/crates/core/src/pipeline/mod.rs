//! End-to-end glue: preprocessing, model training, case-level prediction and
//! the prediction CSV.

mod predictions;
mod prepared;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use predictions::{predictions_from_csv, predictions_to_csv, to_method_estimates, PredictionRow, PREDICTION_COLUMNS};
pub use prepared::{preprocess, ModalityExamples, PreparedItem, PreparedSet, PreparedVisit};

use crate::cohort::CohortManifest;
use crate::evalstats::MethodEstimates;
use crate::formulae::{baseline_estimates, FormulaLibrary};
use crate::aggregation::{ensemble_cases, inverse_variance_aggregate, CaseEstimate, Estimate};
use crate::error::{Error, Result};
use crate::estimator::{
    predict_media, train, ConvRegressor, Modality, NetArch, PreparedMedia, Predictor, StepRecord, TrainConfig,
    TrainingSet,
};
use crate::imaging::Clip;

/// Model id of the cross-model average of all video models.
pub const VIDEO_ENSEMBLE_ID: &str = "video";
/// Model id of the average over every model.
pub const ENSEMBLE_ID: &str = "ensemble";

/// Builds the reference network for `modality` on the set's geometry,
/// initialises its heads at the label mean/variance and trains it.
pub fn train_model(
    set: &PreparedSet,
    modality: Modality,
    cfg: &TrainConfig,
    init_seed: u64,
) -> Result<(ConvRegressor<f32>, Vec<StepRecord>)> {
    let arch = match modality {
        Modality::Image => NetArch::image(&set.clip.image_target),
        Modality::Video => NetArch::video(&set.clip.video_target, set.clip.clip_len),
    };
    let data = set.examples(modality);
    if TrainingSet::<f32>::is_empty(&data) {
        return Err(Error::Empty("training examples of the requested modality"));
    }
    let t: Vec<f64> = data
        .labels()
        .map(|g| arch.transform.forward(g))
        .collect::<Result<_>>()?;
    let n = t.len() as f64;
    let mean_t = t.iter().sum::<f64>() / n;
    let var_t = (t.iter().map(|x| (x - mean_t).powi(2)).sum::<f64>() / n).max(1e-4);
    let init_ga = arch.transform.inverse(mean_t)?;
    let mut net = ConvRegressor::new(arch, init_seed, init_ga, var_t)?;
    let curve = train(&mut net, &data, cfg)?;
    Ok((net, curve))
}

/// Case-level estimates of every model for every visit, plus the video and
/// overall ensembles when there is more than one contributing model.
pub fn predict_visits(set: &PreparedSet, models: &[(String, &ConvRegressor<f32>)]) -> Result<Vec<PredictionRow>> {
    let per_visit = set
        .visits
        .par_iter()
        .map(|v| {
            let mut cases: Vec<CaseEstimate<f64>> = Vec::new();
            for (id, net) in models {
                let modality = net.modality();
                let mut estimates: Vec<Estimate<f64>> = Vec::new();
                for item in v.items.iter().filter(|i| i.modality == modality) {
                    let media = match item.to_input::<f32>()? {
                        crate::estimator::ModelInput::Image(f) => PreparedMedia::Image(f),
                        crate::estimator::ModelInput::Clip(c) => PreparedMedia::Video(vec![Clip { ..c }]),
                    };
                    for (_, e) in predict_media(*net, &media, &item.source)? {
                        let source = match modality {
                            Modality::Image => item.source.clone(),
                            Modality::Video => e.source.clone(),
                        };
                        estimates.push(Estimate::new(f64::from(e.mean), f64::from(e.variance), source));
                    }
                }
                if !estimates.is_empty() {
                    cases.push(inverse_variance_aggregate(&estimates, id)?);
                }
            }
            let videos: Vec<CaseEstimate<f64>> = models
                .iter()
                .zip(&cases)
                .filter(|((_, net), _)| net.modality() == Modality::Video)
                .map(|(_, c)| c.clone())
                .collect();
            let mut out = cases.clone();
            if videos.len() > 1 && videos.len() == models.iter().filter(|(_, n)| n.modality() == Modality::Video).count() {
                out.push(ensemble_cases(&videos, VIDEO_ENSEMBLE_ID)?);
            }
            if cases.len() > 1 {
                out.push(ensemble_cases(&cases, ENSEMBLE_ID)?);
            }
            Ok(out
                .into_iter()
                .map(|estimate| PredictionRow {
                    patient_id: v.patient_id.clone(),
                    visit_id: v.visit_id.clone(),
                    estimate,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_visit.into_iter().flatten().collect())
}

/// Mean absolute error of each model id over `rows` against the set's
/// ground truth.
pub fn mae_by_model(set: &PreparedSet, rows: &[PredictionRow]) -> BTreeMap<String, f64> {
    let gt: BTreeMap<&str, f64> = set.visits.iter().map(|v| (v.visit_id.as_str(), v.ga_days)).collect();
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows {
        if let Some(g) = gt.get(r.visit_id.as_str()) {
            let e = acc.entry(r.estimate.model_id.clone()).or_default();
            e.0 += (r.estimate.mean - g).abs();
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Model predictions merged with the baseline estimates of every visit that
/// has a prediction. Recorded baselines win over computed ones.
pub fn merge_baselines(
    cohort: &CohortManifest,
    rows: &[PredictionRow],
    library: &FormulaLibrary,
    baselines: &[&str],
) -> MethodEstimates {
    let mut out = to_method_estimates(rows);
    for (_, v) in cohort.visits() {
        if let Some(m) = out.get_mut(&v.visit_id) {
            for (name, b) in baseline_estimates(v, library, baselines).values {
                m.insert(name, b.ga_days);
            }
        }
    }
    out
}
