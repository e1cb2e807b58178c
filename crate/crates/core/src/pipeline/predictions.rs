use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::aggregation::CaseEstimate;
use crate::error::{Error, Result};
use crate::evalstats::MethodEstimates;

/// One row of the per-case prediction CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub patient_id: String,
    pub visit_id: String,
    pub estimate: CaseEstimate<f64>,
}

pub const PREDICTION_COLUMNS: &str = "patient_id,visit_id,model_id,mean_days,variance,n_inputs";

/// Values are written with 17 significant digits and read back exactly.
pub fn predictions_to_csv(rows: &[PredictionRow], header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(h);
        out.push('\n');
    }
    out.push_str(PREDICTION_COLUMNS);
    out.push('\n');
    for r in rows {
        let e = &r.estimate;
        let _ = writeln!(
            out,
            "{},{},{},{:.17e},{:.17e},{}",
            r.patient_id, r.visit_id, e.model_id, e.mean, e.variance, e.n_inputs
        );
    }
    out
}

pub fn predictions_from_csv(text: &str, origin: &str) -> Result<Vec<PredictionRow>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line == PREDICTION_COLUMNS {
                continue;
            }
        }
        let err = |m: &str| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err("expected 6 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("bad number `{s}`")));
        rows.push(PredictionRow {
            patient_id: f[0].to_string(),
            visit_id: f[1].to_string(),
            estimate: CaseEstimate {
                mean: num(f[3])?,
                variance: num(f[4])?,
                n_inputs: f[5].parse().map_err(|_| err("bad n_inputs"))?,
                model_id: f[2].to_string(),
            },
        });
    }
    Ok(rows)
}

/// visit -> model -> mean GA days.
pub fn to_method_estimates(rows: &[PredictionRow]) -> MethodEstimates {
    let mut out: MethodEstimates = BTreeMap::new();
    for r in rows {
        out.entry(r.visit_id.clone())
            .or_default()
            .insert(r.estimate.model_id.clone(), r.estimate.mean);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![PredictionRow {
            patient_id: "P1".into(),
            visit_id: "P1-V1".into(),
            estimate: CaseEstimate {
                mean: 123.456789012345678,
                variance: 0.1 + 0.2,
                n_inputs: 3,
                model_id: "ensemble".into(),
            },
        }];
        let text = predictions_to_csv(&rows, Some("# h"));
        assert_eq!(predictions_from_csv(&text, "p").unwrap(), rows);
        assert!(predictions_from_csv("a,b\n", "p").is_err());
        assert_eq!(to_method_estimates(&rows)["P1-V1"]["ensemble"], rows[0].estimate.mean);
    }
}
