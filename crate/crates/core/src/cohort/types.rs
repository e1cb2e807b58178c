use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Valid ground-truth GA window in days.
pub const GA_RANGE_DAYS: (i64, i64) = (42, 315);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Country {
    US,
    Zambia,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Device {
    GE,
    Sonosite,
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Country::US => "US",
            Country::Zambia => "Zambia",
        })
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Device::GE => "GE",
            Device::Sonosite => "Sonosite",
        })
    }
}

/// Fetal biometry in centimetres; absent measurements are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BiometryMeasurements {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bpd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crl: Option<f64>,
}

impl BiometryMeasurements {
    pub const VARIABLES: [&'static str; 5] = ["bpd", "hc", "ac", "fl", "crl"];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "bpd" => self.bpd,
            "hc" => self.hc,
            "ac" => self.ac,
            "fl" => self.fl,
            "crl" => self.crl,
            _ => None,
        }
    }

    /// (name, value) pairs of every present measurement.
    pub fn present(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        Self::VARIABLES.iter().filter_map(|n| self.get(n).map(|v| (*n, v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Image,
    Video,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anatomy {
    Head,
    Abdomen,
    Femur,
    CrownRump,
}

impl Anatomy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Anatomy::Head => "head",
            Anatomy::Abdomen => "abdomen",
            Anatomy::Femur => "femur",
            Anatomy::CrownRump => "crown_rump",
        }
    }
}

/// Reference to a still image (PGM file) or a fly-to video (directory with an
/// `index.json`), relative to the manifest's media root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaRef {
    pub kind: MediaKind,
    pub anatomy: Anatomy,
    pub path: String,
    /// cm/pixel
    pub pixel_spacing: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Sga,
    Normal,
    Lga,
}

/// Generator-side ground truth for synthetic fetuses. Absent on real data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFetus {
    /// Size percentile as a standard-normal score.
    pub size_z: f64,
    pub size_class: SizeClass,
    /// Multiplier on the median biometry for this GA.
    pub size_factor: f64,
    /// Noise-free biometry the media are rendered from.
    pub true_biometry: BiometryMeasurements,
    /// Per-visit jitter of the tissue-maturity cue, in days.
    pub maturity_offset_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub visit_id: String,
    pub days_since_baseline: i64,
    pub baseline_ga: i64,
    pub biometry: BiometryMeasurements,
    #[serde(default)]
    pub media: Vec<MediaRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula_ga_estimates: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<LatentFetus>,
}

impl Visit {
    /// Precomputed baseline estimate recorded in the manifest, if any.
    pub fn recorded_estimate(&self, name: &str) -> Option<f64> {
        self.formula_ga_estimates.as_ref()?.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub patient_id: String,
    pub country: Country,
    pub device: Device,
    pub visits: Vec<Visit>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CohortManifest {
    pub patients: Vec<Patient>,
}

impl CohortManifest {
    pub fn n_visits(&self) -> usize {
        self.patients.iter().map(|p| p.visits.len()).sum()
    }

    pub fn visits(&self) -> impl Iterator<Item = (&Patient, &Visit)> {
        self.patients.iter().flat_map(|p| p.visits.iter().map(move |v| (p, v)))
    }

    pub fn patient(&self, id: &str) -> Option<&Patient> {
        self.patients.iter().find(|p| p.patient_id == id)
    }

    /// Checks every structural invariant of the cohort.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.patients {
            if !seen.insert(p.patient_id.as_str()) {
                return Err(Error::Validation(format!("duplicated patient_id {}", p.patient_id)));
            }
            validate_patient(p)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_patient(p: &Patient) -> Result<()> {
    let fail = |msg: String| Err(Error::Validation(format!("patient {}: {msg}", p.patient_id)));
    if p.device == Device::Sonosite && p.country != Country::Zambia {
        return fail("Sonosite devices are only used in Zambia".into());
    }
    if p.visits.is_empty() {
        return fail("no visits".into());
    }
    let baselines = p.visits.iter().filter(|v| v.days_since_baseline == 0).count();
    if baselines != 1 {
        return fail(format!("{baselines} visits with days_since_baseline = 0, expected 1"));
    }
    if p.visits.windows(2).any(|w| w[0].days_since_baseline > w[1].days_since_baseline) {
        return fail("visits are not ordered by days_since_baseline".into());
    }
    let mut ids = std::collections::BTreeSet::new();
    for v in &p.visits {
        if !ids.insert(v.visit_id.as_str()) {
            return fail(format!("duplicated visit_id {}", v.visit_id));
        }
        let ga = ground_truth_ga(v)?;
        if !(GA_RANGE_DAYS.0..=GA_RANGE_DAYS.1).contains(&ga) {
            return fail(format!("visit {} has ground-truth GA {ga} outside [42, 315]", v.visit_id));
        }
        if let Some((name, value)) = v.biometry.present().find(|(_, x)| !(*x > 0.0)) {
            return fail(format!("visit {}: {name} = {value} is not positive", v.visit_id));
        }
        if v.media.iter().any(|m| !(m.pixel_spacing > 0.0)) {
            return fail(format!("visit {}: media with non-positive pixel spacing", v.visit_id));
        }
    }
    Ok(())
}

/// GA at the initial exam plus the days elapsed since it.
pub fn ground_truth_ga(visit: &Visit) -> Result<i64> {
    if visit.days_since_baseline < 0 {
        return Err(Error::InvalidVisit {
            visit_id: visit.visit_id.clone(),
            reason: format!("negative days_since_baseline {}", visit.days_since_baseline),
        });
    }
    if visit.baseline_ga <= 0 {
        return Err(Error::InvalidVisit {
            visit_id: visit.visit_id.clone(),
            reason: format!("baseline GA {} is not positive", visit.baseline_ga),
        });
    }
    Ok(visit.baseline_ga + visit.days_since_baseline)
}

/// 1, 2 or 3 for GA < 98, 98..=195, >= 196 days.
pub fn trimester(ga_days: f64) -> u8 {
    if ga_days < 98.0 {
        1
    } else if ga_days < 196.0 {
        2
    } else {
        3
    }
}
