//! Per-population, per-week abdominal circumference percentiles and size
//! classification.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cohort::{ground_truth_ga, CohortManifest, Country};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthConfig {
    pub severe_sga_percentile: f64,
    pub sga_percentile: f64,
    pub lga_percentile: f64,
    /// Inclusive gestational-week window.
    pub week_range: (u32, u32),
    pub min_studies_per_week: usize,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self {
            severe_sga_percentile: 3.0,
            sga_percentile: 10.0,
            lga_percentile: 90.0,
            week_range: (14, 36),
            min_studies_per_week: 14,
        }
    }
}

impl GrowthConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = 0.0 < self.severe_sga_percentile
            && self.severe_sga_percentile < self.sga_percentile
            && self.sga_percentile < self.lga_percentile
            && self.lga_percentile < 100.0;
        if !ordered || self.week_range.0 > self.week_range.1 || self.min_studies_per_week == 0 {
            return Err(Error::Config(format!("invalid growth configuration {self:?}")));
        }
        Ok(())
    }
}

/// Linear interpolation between order statistics at the 1-indexed rank
/// `h = (n - 1) q + 1`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile {q} outside [0, 1]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&v, q))
}

fn percentile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileCell {
    pub n: usize,
    pub p3: f64,
    pub p10: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PercentileTable {
    pub cells: BTreeMap<(Country, u32), PercentileCell>,
}

pub fn gestational_week(ga_days: f64) -> u32 {
    (ga_days / 7.0).floor().max(0.0) as u32
}

/// Pools AC measurements of every visit (all splits) by country and week.
pub fn build_percentile_table(cohort: &CohortManifest, cfg: &GrowthConfig) -> Result<PercentileTable> {
    cfg.validate()?;
    let mut groups: BTreeMap<(Country, u32), Vec<f64>> = BTreeMap::new();
    for (p, v) in cohort.visits() {
        let Some(ac) = v.biometry.ac else { continue };
        let week = gestational_week(ground_truth_ga(v)? as f64);
        if (cfg.week_range.0..=cfg.week_range.1).contains(&week) {
            groups.entry((p.country, week)).or_default().push(ac);
        }
    }
    let cells: BTreeMap<_, _> = groups
        .into_iter()
        .filter(|(_, acs)| acs.len() >= cfg.min_studies_per_week)
        .map(|(key, mut acs)| {
            acs.sort_by(f64::total_cmp);
            let cell = PercentileCell {
                n: acs.len(),
                p3: percentile_sorted(&acs, cfg.severe_sga_percentile / 100.0),
                p10: percentile_sorted(&acs, cfg.sga_percentile / 100.0),
                p90: percentile_sorted(&acs, cfg.lga_percentile / 100.0),
            };
            (key, cell)
        })
        .collect();
    if cells.is_empty() {
        return Err(Error::Validation(
            "no (population, week) cell has enough AC measurements".into(),
        ));
    }
    Ok(PercentileTable { cells })
}

impl PercentileTable {
    pub fn to_csv(&self, header: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(h) = header {
            out.push_str(h);
            out.push('\n');
        }
        out.push_str("population,week,n,p3,p10,p90\n");
        for ((pop, week), c) in &self.cells {
            out.push_str(&format!("{pop},{week},{},{:.4},{:.4},{:.4}\n", c.n, c.p3, c.p10, c.p90));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeCategory {
    SevereSga,
    Sga,
    Normal,
    Lga,
    Unclassifiable,
}

impl SizeCategory {
    /// Severe SGA fetuses belong to the SGA analysis group.
    pub fn in_sga_group(self) -> bool {
        matches!(self, SizeCategory::SevereSga | SizeCategory::Sga)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SizeCategory::SevereSga => "severe_sga",
            SizeCategory::Sga => "sga",
            SizeCategory::Normal => "normal",
            SizeCategory::Lga => "lga",
            SizeCategory::Unclassifiable => "unclassifiable",
        }
    }
}

impl fmt::Display for SizeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify_size(ac: f64, ga_days: f64, population: Country, table: &PercentileTable) -> SizeCategory {
    let Some(c) = table.cells.get(&(population, gestational_week(ga_days))) else {
        return SizeCategory::Unclassifiable;
    };
    if ac < c.p3 {
        SizeCategory::SevereSga
    } else if ac < c.p10 {
        SizeCategory::Sga
    } else if ac > c.p90 {
        SizeCategory::Lga
    } else {
        SizeCategory::Normal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::tests::visit;
    use crate::cohort::{synthesize_cohort, Device, Patient, SynthConfig};
    use proptest::prelude::*;

    #[test]
    fn percentile_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((percentile(&v, 0.10).unwrap() - 1.9).abs() < 1e-12);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 1.0).unwrap(), 10.0);
        assert!(percentile(&[], 0.5).is_err());
        assert!(percentile(&v, 1.5).is_err());
    }

    fn cohort_with(cells: &[(i64, usize, f64)]) -> CohortManifest {
        let mut patients = Vec::new();
        for (ga, n, ac) in cells {
            for i in 0..*n {
                let mut v = visit(&format!("{ga}-{i}-V1"), *ga, 0);
                v.biometry.ac = Some(*ac);
                patients.push(Patient {
                    patient_id: format!("{ga}-{i}"),
                    country: Country::US,
                    device: Device::GE,
                    visits: vec![v],
                });
            }
        }
        CohortManifest { patients }
    }

    #[test]
    fn eligibility_rules() {
        // week 20 with 14 samples, week 21 with 13, week 13 and week 37 with plenty
        let c = cohort_with(&[(140, 14, 16.0), (147, 13, 17.0), (91, 30, 8.0), (259, 30, 33.0)]);
        let t = build_percentile_table(&c, &GrowthConfig::default()).unwrap();
        assert_eq!(t.cells.keys().collect::<Vec<_>>(), [&(Country::US, 20)]);
        let cell = t.cells[&(Country::US, 20)];
        assert_eq!((cell.p3, cell.p10, cell.p90), (16.0, 16.0, 16.0));
        assert_eq!(cell.n, 14);
        assert!(build_percentile_table(&cohort_with(&[(147, 13, 17.0)]), &GrowthConfig::default()).is_err());
    }

    #[test]
    fn strict_thresholds() {
        let cell = PercentileCell {
            n: 20,
            p3: 10.0,
            p10: 12.0,
            p90: 20.0,
        };
        let t = PercentileTable {
            cells: BTreeMap::from([((Country::Zambia, 20), cell)]),
        };
        let at = |ac| classify_size(ac, 142.0, Country::Zambia, &t);
        assert_eq!(at(12.0), SizeCategory::Normal);
        assert_eq!(at(11.99), SizeCategory::Sga);
        assert_eq!(at(9.0), SizeCategory::SevereSga);
        assert!(at(9.0).in_sga_group());
        assert_eq!(at(20.0), SizeCategory::Normal);
        assert_eq!(at(20.01), SizeCategory::Lga);
        assert_eq!(classify_size(15.0, 280.0, Country::Zambia, &t), SizeCategory::Unclassifiable);
        assert_eq!(classify_size(15.0, 142.0, Country::US, &t), SizeCategory::Unclassifiable);
    }

    #[test]
    fn synthetic_flag_rates() {
        let c = synthesize_cohort(&SynthConfig {
            n_patients: 5000,
            visits_per_patient_weights: [1.0, 0.0, 0.0],
            rng_seed: 17,
            ..Default::default()
        })
        .unwrap();
        let t = build_percentile_table(&c, &GrowthConfig::default()).unwrap();
        let mut counts = BTreeMap::new();
        let mut total = 0usize;
        for (p, v) in c.visits() {
            let Some(ac) = v.biometry.ac else { continue };
            let cat = classify_size(ac, ground_truth_ga(v).unwrap() as f64, p.country, &t);
            if cat != SizeCategory::Unclassifiable {
                total += 1;
                *counts.entry(cat.in_sga_group().then_some(SizeCategory::Sga).unwrap_or(cat)).or_insert(0usize) += 1;
            }
        }
        let frac = |c: SizeCategory| counts.get(&c).copied().unwrap_or(0) as f64 / total as f64;
        assert!((0.08..=0.12).contains(&frac(SizeCategory::Sga)), "{counts:?}");
        assert!((0.08..=0.12).contains(&frac(SizeCategory::Lga)), "{counts:?}");
        assert!(t.cells.values().all(|c| c.p3 <= c.p10 && c.p10 <= c.p90));
        let csv = t.to_csv(Some("# h"));
        assert_eq!(csv.lines().count(), t.cells.len() + 2);
    }

    proptest! {
        #[test]
        fn monotone_in_q(v in prop::collection::vec(-100.0f64..100.0, 1..50), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(percentile(&v, lo).unwrap() <= percentile(&v, hi).unwrap());
        }

        #[test]
        fn classification_partitions(ac in 1.0f64..40.0, p3 in 5.0f64..15.0, d1 in 0.0f64..5.0, d2 in 0.0f64..10.0) {
            let cell = PercentileCell { n: 20, p3, p10: p3 + d1, p90: p3 + d1 + d2 };
            let t = PercentileTable { cells: BTreeMap::from([((Country::US, 25), cell)]) };
            let c = classify_size(ac, 178.0, Country::US, &t);
            let groups = [c.in_sga_group(), c == SizeCategory::Normal, c == SizeCategory::Lga];
            prop_assert_eq!(groups.iter().filter(|g| **g).count(), 1);
        }
    }
}
