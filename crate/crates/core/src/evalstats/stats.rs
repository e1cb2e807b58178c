use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::cohort::{CohortManifest, Patient, Visit};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// mean ± 1.96 sd/√n
    #[default]
    NormalZ,
    /// mean ± t(0.975, n-1) sd/√n
    StudentT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub ci_method: CiMethod,
    pub bin_width_days: f64,
    pub seed: u64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            ci_method: CiMethod::NormalZ,
            bin_width_days: 28.0,
            seed: 0,
        }
    }
}

/// One uniformly chosen eligible visit per patient. Each patient draws from
/// its own stream, so the choice does not depend on cohort order.
pub fn select_one_visit_per_patient<'a>(
    cohort: &'a CohortManifest,
    eligible: impl Fn(&Patient, &Visit) -> bool,
    seed: u64,
) -> Vec<(&'a Patient, &'a Visit)> {
    cohort
        .patients
        .iter()
        .filter_map(|p| {
            let candidates: Vec<&Visit> = p.visits.iter().filter(|v| eligible(p, v)).collect();
            match candidates.len() {
                0 => None,
                1 => Some((p, candidates[0])),
                n => {
                    let mut rng = rng_from_seed(derive_seed(seed, &p.patient_id));
                    Some((p, candidates[rng.random_range(0..n)]))
                }
            }
        })
        .collect()
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub mae: f64,
    pub sd_abs: f64,
    pub me: f64,
    pub sd: f64,
    /// n = 1: the standard deviations are undefined and reported as 0.
    pub single: bool,
}

pub fn mae_me(errors: &[f64]) -> Result<ErrorSummary> {
    if errors.is_empty() {
        return Err(Error::Empty("mae_me"));
    }
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let (me, sd) = mean_sd(errors);
    let (mae, sd_abs) = mean_sd(&abs);
    Ok(ErrorSummary {
        n: errors.len(),
        mae,
        sd_abs,
        me,
        sd,
        single: errors.len() == 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDiff {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Two-sided 95% interval for a mean from summary statistics.
pub fn ci_from_summary(mean: f64, sd: f64, n: usize, method: CiMethod) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("confidence interval needs n >= 2, got {n}")));
    }
    let q = match method {
        CiMethod::NormalZ => 1.96,
        CiMethod::StudentT => StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map_err(|e| Error::Domain(e.to_string()))?
            .inverse_cdf(0.975),
    };
    let half = q * sd / (n as f64).sqrt();
    Ok((mean - half, mean + half))
}

/// Paired difference of absolute errors, `|model| - |baseline|` per patient.
pub fn paired_diff_ci(model_abs: &[f64], baseline_abs: &[f64], method: CiMethod) -> Result<PairedDiff> {
    if model_abs.len() != baseline_abs.len() {
        return Err(Error::LengthMismatch(model_abs.len(), baseline_abs.len()));
    }
    let d: Vec<f64> = model_abs.iter().zip(baseline_abs).map(|(m, b)| m.abs() - b.abs()).collect();
    if d.len() < 2 {
        return Err(Error::InvalidInput(format!("paired comparison needs n >= 2, got {}", d.len())));
    }
    let (mean_diff, sd_diff) = mean_sd(&d);
    let (ci_lo, ci_hi) = ci_from_summary(mean_diff, sd_diff, d.len(), method)?;
    Ok(PairedDiff {
        n: d.len(),
        mean_diff,
        sd_diff,
        ci_lo,
        ci_hi,
    })
}

/// One-sided sign test of H0: median >= 0 against H1: median < 0.
/// Zeros are dropped; p = P(Binomial(n, 1/2) <= #positive).
pub fn sign_test_median(diffs: &[f64]) -> Result<f64> {
    let n = diffs.iter().filter(|d| **d != 0.0).count();
    if n == 0 {
        return Err(Error::Empty("sign test after dropping zero differences"));
    }
    let k = diffs.iter().filter(|d| **d > 0.0).count();
    if n <= 1000 {
        // exact: sum of binomial coefficients over 2^n
        let mut coef = 1.0f64;
        let mut sum = 1.0f64;
        for i in 1..=k {
            coef = coef * (n - i + 1) as f64 / i as f64;
            sum += coef;
        }
        Ok((sum / 2f64.powi(n as i32)).min(1.0))
    } else {
        let b = Binomial::new(0.5, n as u64).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(b.cdf(k as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub bin: i64,
    pub ga_lo: f64,
    pub ga_hi: f64,
    pub n: usize,
    /// MAE per method, aligned with the input method order.
    pub mae: Vec<f64>,
}

/// Per-bin MAE of each method; `rows` are (ground-truth GA, per-method errors).
pub fn window_bin(rows: &[(f64, Vec<f64>)], bin_width_days: f64) -> Result<Vec<BinRow>> {
    if !(bin_width_days > 0.0) {
        return Err(Error::InvalidInput(format!("bin width must be positive, got {bin_width_days}")));
    }
    let mut bins: std::collections::BTreeMap<i64, Vec<&Vec<f64>>> = Default::default();
    for (ga, errs) in rows {
        bins.entry(bin_index(*ga, bin_width_days)).or_default().push(errs);
    }
    let width = rows.first().map_or(0, |r| r.1.len());
    Ok(bins
        .into_iter()
        .map(|(bin, members)| {
            let n = members.len();
            let mae = (0..width)
                .map(|j| members.iter().map(|e| e[j].abs()).sum::<f64>() / n as f64)
                .collect();
            BinRow {
                bin,
                ga_lo: bin as f64 * bin_width_days,
                ga_hi: (bin + 1) as f64 * bin_width_days,
                n,
                mae,
            }
        })
        .collect())
}

pub fn bin_index(ga_days: f64, bin_width_days: f64) -> i64 {
    (ga_days / bin_width_days).floor() as i64
}
