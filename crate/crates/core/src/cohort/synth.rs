//! Seeded synthetic cohort generator.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use super::types::*;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Generator-side noise of the clinical biometry and of the recorded
/// formula-based baseline estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiometryNoiseModel {
    /// Relative measurement error of each biometric length.
    pub relative_sd: f64,
    /// Baseline estimate error sd = `base_sd_days + sd_per_day * ga`.
    pub base_sd_days: f64,
    pub sd_per_day: f64,
    pub sga_bias_days: f64,
    pub lga_bias_days: f64,
    /// Per-visit jitter of the rendered maturity cue.
    pub maturity_sd_days: f64,
}

impl Default for BiometryNoiseModel {
    fn default() -> Self {
        Self {
            relative_sd: 0.03,
            base_sd_days: 1.5,
            sd_per_day: 0.025,
            sga_bias_days: -8.0,
            lga_bias_days: 2.5,
            maturity_sd_days: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub trimester_visit_weights: [f64; 3],
    pub sga_fraction: f64,
    pub lga_fraction: f64,
    pub biometry_noise_model: BiometryNoiseModel,
    /// US-GE, Zambia-GE, Zambia-Sonosite
    pub site_weights: [f64; 3],
    /// Probability of 1, 2 or 3 visits per patient.
    pub visits_per_patient_weights: [f64; 3],
    /// Fly-to video length range in frames (inclusive).
    pub video_frames: (usize, usize),
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 400,
            trimester_visit_weights: [0.093, 0.347, 0.560],
            sga_fraction: 0.10,
            lga_fraction: 0.10,
            biometry_noise_model: BiometryNoiseModel::default(),
            site_weights: [0.42, 0.18, 0.40],
            visits_per_patient_weights: [0.4, 0.35, 0.25],
            video_frames: (36, 60),
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let weights_ok = |w: &[f64]| {
            w.iter().all(|x| *x >= 0.0 && x.is_finite()) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9
        };
        if !weights_ok(&self.trimester_visit_weights) {
            return Err(Error::Config("trimester visit weights must be non-negative and sum to 1".into()));
        }
        if !weights_ok(&self.site_weights) || !weights_ok(&self.visits_per_patient_weights) {
            return Err(Error::Config("site and visit-count weights must be non-negative and sum to 1".into()));
        }
        let frac = |x: f64| (0.0..=1.0).contains(&x);
        if !frac(self.sga_fraction) || !frac(self.lga_fraction) || self.sga_fraction + self.lga_fraction > 1.0 {
            return Err(Error::Config("sga/lga fractions must lie in [0, 1] and sum to at most 1".into()));
        }
        let n = &self.biometry_noise_model;
        if [n.relative_sd, n.base_sd_days, n.sd_per_day, n.maturity_sd_days]
            .iter()
            .any(|x| !(*x >= 0.0))
        {
            return Err(Error::Config("noise parameters must be non-negative".into()));
        }
        if self.video_frames.0 == 0 || self.video_frames.0 > self.video_frames.1 {
            return Err(Error::Config("video frame range must be non-empty and start at >= 1".into()));
        }
        Ok(())
    }
}

/// Inclusive GA windows the generator draws visits from, per trimester.
pub const TRIMESTER_DAYS: [(i64, i64); 3] = [(42, 97), (98, 195), (196, 294)];

/// Population-median biometry (cm) at `ga_days`. Lengths are cubic/quadratic
/// growth curves in weeks; the crown-rump length inverts the dating curve
/// `ga = 8.052 sqrt(crl_mm) + 23.73`.
pub fn median_biometry(ga_days: f64) -> BiometryMeasurements {
    let w = ga_days / 7.0;
    let pos = |x: f64| x.max(0.05);
    if trimester(ga_days) == 1 {
        let mm = ((ga_days - 23.73) / 8.052).powi(2);
        BiometryMeasurements {
            crl: Some(pos(mm / 10.0)),
            ..Default::default()
        }
    } else {
        BiometryMeasurements {
            bpd: Some(pos(-3.08 + 0.41 * w - 0.000061 * w.powi(3))),
            hc: Some(pos(-11.48 + 1.56 * w - 0.0002548 * w.powi(3))),
            ac: Some(pos(-13.3 + 1.61 * w - 0.00998 * w * w)),
            fl: Some(pos(-3.91 + 0.427 * w - 0.0034 * w * w)),
            crl: None,
        }
    }
}

fn scale(b: BiometryMeasurements, mut f: impl FnMut(f64) -> f64) -> BiometryMeasurements {
    BiometryMeasurements {
        bpd: b.bpd.map(&mut f),
        hc: b.hc.map(&mut f),
        ac: b.ac.map(&mut f),
        fl: b.fl.map(&mut f),
        crl: b.crl.map(&mut f),
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Size score at which a fetus counts as severely small.
pub fn severe_sga_z() -> f64 {
    StdNormal::new(0.0, 1.0).expect("unit normal").inverse_cdf(0.03)
}

/// Growth-rate spread of the latent size factor, `exp(SIZE_LOG_SD * z)`.
pub const SIZE_LOG_SD: f64 = 0.09;

/// Per-formula bias offsets (days) of the recorded baseline estimates.
const RECORDED_FORMULAE: [(&str, f64, bool); 3] = [
    ("hadlock", 0.0, true),
    ("intergrowth", 4.0, false),
    ("nichd", 1.0, false),
];

pub fn synthesize_cohort(cfg: &SynthConfig) -> Result<CohortManifest> {
    cfg.validate()?;
    if cfg.n_patients == 0 {
        return Err(Error::EmptyCohort);
    }
    let width = cfg.n_patients.to_string().len().max(4);
    let patients = (0..cfg.n_patients)
        .map(|i| synth_patient(cfg, &format!("P{:0width$}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let cohort = CohortManifest { patients };
    cohort.validate()?;
    Ok(cohort)
}

fn synth_patient(cfg: &SynthConfig, pid: &str) -> Result<Patient> {
    let mut rng = rng_from_seed(derive_seed(cfg.rng_seed, pid));
    let noise = &cfg.biometry_noise_model;
    let weighted = |w: &[f64]| WeightedIndex::new(w).map_err(|e| Error::Config(e.to_string()));
    let (country, device) = match weighted(&cfg.site_weights)?.sample(&mut rng) {
        0 => (Country::US, Device::GE),
        1 => (Country::Zambia, Device::GE),
        _ => (Country::Zambia, Device::Sonosite),
    };

    let unit = StdNormal::new(0.0, 1.0).expect("unit normal");
    let u: f64 = rng.random();
    let (size_class, pct) = if u < cfg.sga_fraction {
        (SizeClass::Sga, u)
    } else if u >= 1.0 - cfg.lga_fraction {
        (SizeClass::Lga, u)
    } else {
        (SizeClass::Normal, u)
    };
    let size_z = unit.inverse_cdf(pct.clamp(1e-6, 1.0 - 1e-6));
    let size_factor = (SIZE_LOG_SD * size_z).exp();

    let n_visits = weighted(&cfg.visits_per_patient_weights)?.sample(&mut rng) + 1;
    let tri = weighted(&cfg.trimester_visit_weights)?;
    let mut gas: Vec<i64> = Vec::with_capacity(n_visits);
    while gas.len() < n_visits {
        let (lo, hi) = TRIMESTER_DAYS[tri.sample(&mut rng)];
        let g = rng.random_range(lo..=hi);
        if !gas.contains(&g) {
            gas.push(g);
        }
    }
    gas.sort_unstable();
    let baseline_ga = gas[0];

    let bias = match size_class {
        SizeClass::Sga => noise.sga_bias_days,
        SizeClass::Lga => noise.lga_bias_days,
        SizeClass::Normal => 0.0,
    };
    let mut visits = Vec::with_capacity(n_visits);
    for (k, &g) in gas.iter().enumerate() {
        let visit_id = format!("{pid}-V{}", k + 1);
        let gf = g as f64;
        let t = trimester(gf);
        let true_biometry = scale(median_biometry(gf), |x| x * size_factor);
        let biometry = scale(true_biometry, |x| {
            let e: f64 = rng.sample(StandardNormal);
            round2(x * (1.0 + noise.relative_sd * e)).max(0.01)
        });
        let sd = noise.base_sd_days + noise.sd_per_day * gf;
        let err = Normal::new(bias, sd).map_err(|e| Error::Config(e.to_string()))?;
        let mut estimates = BTreeMap::new();
        for (name, offset, all_trimesters) in RECORDED_FORMULAE {
            if all_trimesters || t > 1 {
                estimates.insert(name.to_string(), round2(gf + offset + err.sample(&mut rng)));
            }
        }
        let maturity_offset_days = noise.maturity_sd_days * rng.sample::<f64, _>(StandardNormal);

        let stills: &[Anatomy] = if t == 1 {
            &[Anatomy::CrownRump]
        } else {
            &[Anatomy::Head, Anatomy::Abdomen, Anatomy::Femur]
        };
        let video_anatomy = if t == 1 {
            Anatomy::CrownRump
        } else {
            [Anatomy::Head, Anatomy::Abdomen, Anatomy::Femur][rng.random_range(0..3)]
        };
        let spacing = super::render::native_geometry(device).pixel_spacing;
        let dir = format!("media/{pid}/{visit_id}");
        let mut media: Vec<MediaRef> = stills
            .iter()
            .map(|a| MediaRef {
                kind: MediaKind::Image,
                anatomy: *a,
                path: format!("{dir}/{}.pgm", a.as_str()),
                pixel_spacing: spacing,
                frame_count: None,
            })
            .collect();
        media.push(MediaRef {
            kind: MediaKind::Video,
            anatomy: video_anatomy,
            path: format!("{dir}/video_{}", video_anatomy.as_str()),
            pixel_spacing: spacing,
            frame_count: Some(rng.random_range(cfg.video_frames.0..=cfg.video_frames.1)),
        });

        visits.push(Visit {
            visit_id,
            days_since_baseline: g - baseline_ga,
            baseline_ga,
            biometry,
            media,
            formula_ga_estimates: Some(estimates),
            latent: Some(LatentFetus {
                size_z,
                size_class,
                size_factor,
                true_biometry,
                maturity_offset_days,
            }),
        });
    }
    Ok(Patient {
        patient_id: pid.to_string(),
        country,
        device,
        visits,
    })
}
