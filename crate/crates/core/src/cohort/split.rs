use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::types::CohortManifest;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Tune,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Tune => "tune",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "tune" => Ok(Split::Tune),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split `{other}`"))),
        }
    }
}

/// Per-patient split membership.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn get(&self, patient_id: &str) -> Option<Split> {
        self.assignment.get(patient_id).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.assignment.values().filter(|s| **s == split).count()
    }

    /// `patient_id,split` rows, optionally preceded by a header comment.
    pub fn to_csv(&self, header: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(h) = header {
            out.push_str(h);
            out.push('\n');
        }
        out.push_str("patient_id,split\n");
        for (id, s) in &self.assignment {
            out.push_str(&format!("{id},{s}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut assignment = BTreeMap::new();
        let mut saw_header = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                saw_header = true;
                if line == "patient_id,split" {
                    continue;
                }
            }
            let (id, split) = line.split_once(',').ok_or_else(|| Error::Parse {
                path: "splits".into(),
                line: i + 1,
                message: "expected `patient_id,split`".into(),
            })?;
            assignment.insert(id.to_string(), split.parse()?);
        }
        Ok(Self { assignment })
    }
}

/// Bucket sizes for `n` patients: the tune/test boundaries are the floors of
/// the cumulative shares counted from the end (test first), and every
/// remaining patient goes to train.
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (train, tune, test) = ratios;
    if [train, tune, test].iter().any(|r| !(0.0..=1.0).contains(r))
        || ((train + tune + test) - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split ratios ({train}, {tune}, {test}) must be non-negative and sum to 1"
        )));
    }
    let floor = |x: f64| (x + 1e-9).floor() as usize;
    let n_test = floor(n as f64 * test);
    let n_tune = floor(n as f64 * (test + tune)) - n_test;
    Ok((n - n_test - n_tune, n_tune, n_test))
}

/// Seeded patient-level split; visits never straddle buckets.
pub fn split_patients(cohort: &CohortManifest, ratios: (f64, f64, f64), seed: u64) -> Result<SplitAssignment> {
    if cohort.patients.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let (_, n_tune, n_test) = split_sizes(cohort.patients.len(), ratios)?;
    let mut ids: Vec<&str> = cohort.patients.iter().map(|p| p.patient_id.as_str()).collect();
    ids.sort_unstable();
    ids.shuffle(&mut rng_from_seed(seed));
    let assignment = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let split = if i < n_test {
                Split::Test
            } else if i < n_test + n_tune {
                Split::Tune
            } else {
                Split::Train
            };
            (id.to_string(), split)
        })
        .collect();
    Ok(SplitAssignment { assignment })
}
