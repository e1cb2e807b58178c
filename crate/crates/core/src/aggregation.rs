//! Inverse-variance aggregation of per-clip/per-image estimates, cross-model
//! ensembling and confidence ranking.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A single GA prediction in days with its predicted variance (days²).
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T> {
    pub mean: T,
    pub variance: T,
    pub source: String,
}

impl<T: Scalar> Estimate<T> {
    pub fn new(mean: T, variance: T, source: impl Into<String>) -> Self {
        Self {
            mean,
            variance,
            source: source.into(),
        }
    }
}

/// Case-level estimate produced by one model (or by the ensemble).
#[derive(Debug, Clone, PartialEq)]
pub struct CaseEstimate<T> {
    pub mean: T,
    pub variance: T,
    pub n_inputs: usize,
    pub model_id: String,
}

/// Pools estimates with weights `1/σᵢ²`:
/// mean = Σ(μᵢ/σᵢ²) / Σ(1/σᵢ²), variance = 1 / Σ(1/σᵢ²).
///
/// Inputs are summed in ascending order of `(source, mean, variance)` so the
/// result is bit-identical under permutation of the input.
pub fn inverse_variance_aggregate<T: Scalar>(
    estimates: &[Estimate<T>],
    model_id: &str,
) -> Result<CaseEstimate<T>> {
    if estimates.is_empty() {
        return Err(Error::Empty("inverse_variance_aggregate"));
    }
    if let Some(bad) = estimates
        .iter()
        .find(|e| !(e.variance > T::zero()) || !e.mean.is_finite())
    {
        return Err(Error::InvalidInput(format!(
            "estimate `{}` has mean {} and variance {}; variance must be positive",
            bad.source, bad.mean, bad.variance
        )));
    }
    let mut ordered: Vec<&Estimate<T>> = estimates.iter().collect();
    ordered.sort_by(|a, b| canonical_order(a, b));

    let mut weight_sum = T::zero();
    let mut weighted_mean_sum = T::zero();
    for e in ordered {
        let w = e.variance.recip();
        weight_sum = weight_sum + w;
        weighted_mean_sum = weighted_mean_sum + e.mean * w;
    }
    let mean = weighted_mean_sum / weight_sum;
    // keep rounding from pushing the pooled mean outside the input hull
    let (lo, hi) = estimates.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), e| {
        (lo.min(e.mean), hi.max(e.mean))
    });
    Ok(CaseEstimate {
        mean: mean.max(lo).min(hi),
        variance: weight_sum.recip(),
        n_inputs: estimates.len(),
        model_id: model_id.to_string(),
    })
}

fn canonical_order<T: Scalar>(a: &Estimate<T>, b: &Estimate<T>) -> Ordering {
    a.source
        .cmp(&b.source)
        .then(a.mean.partial_cmp(&b.mean).unwrap_or(Ordering::Equal))
        .then(a.variance.partial_cmp(&b.variance).unwrap_or(Ordering::Equal))
}

/// Unweighted average of per-model case means. The reported variance is the
/// mean input variance divided by the number of models and is not used
/// downstream.
pub fn ensemble_cases<T: Scalar>(cases: &[CaseEstimate<T>], model_id: &str) -> Result<CaseEstimate<T>> {
    if cases.is_empty() {
        return Err(Error::Empty("ensemble_cases"));
    }
    let mut ordered: Vec<&CaseEstimate<T>> = cases.iter().collect();
    ordered.sort_by(|a, b| {
        a.model_id
            .cmp(&b.model_id)
            .then(a.mean.partial_cmp(&b.mean).unwrap_or(Ordering::Equal))
    });
    let n = T::from_usize_lossy(cases.len());
    let mean = ordered.iter().map(|c| c.mean).sum::<T>() / n;
    let variance = ordered.iter().map(|c| c.variance).sum::<T>() / n / n;
    Ok(CaseEstimate {
        mean,
        variance,
        n_inputs: cases.iter().map(|c| c.n_inputs).sum(),
        model_id: model_id.to_string(),
    })
}

/// Sorts ascending by variance (most confident first); ties are broken by
/// source identifier and otherwise keep their input order.
pub fn rank_by_confidence<T: Scalar>(estimates: &[Estimate<T>]) -> Vec<Estimate<T>> {
    let mut out = estimates.to_vec();
    out.sort_by(|a, b| {
        a.variance
            .partial_cmp(&b.variance)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.source.cmp(&b.source))
    });
    out
}
