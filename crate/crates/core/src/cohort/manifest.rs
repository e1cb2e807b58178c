//! JSON-lines manifest: one patient record (with embedded visits) per line.
//! Lines starting with `#` are header/comment lines and are skipped.

use std::fs;
use std::path::Path;

use super::types::{validate_patient, CohortManifest, Patient};
use crate::error::{Error, Result};
use crate::provenance::Provenance;

pub fn parse_manifest(text: &str, origin: &str) -> Result<CohortManifest> {
    let mut patients: Vec<Patient> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let patient: Patient = serde_json::from_str(trimmed).map_err(|e| {
            let message = e.to_string();
            if message.contains("unknown variant") {
                Error::Validation(format!("{origin}: line {line_no}: {message}"))
            } else {
                Error::Parse {
                    path: origin.to_string(),
                    line: line_no,
                    message,
                }
            }
        })?;
        validate_patient(&patient)
            .map_err(|e| Error::Validation(format!("{origin}: line {line_no}: {e}")))?;
        if !seen.insert(patient.patient_id.clone()) {
            return Err(Error::Validation(format!(
                "{origin}: line {line_no}: duplicated patient_id {}",
                patient.patient_id
            )));
        }
        patients.push(patient);
    }
    Ok(CohortManifest { patients })
}

pub fn load_manifest(path: &Path) -> Result<CohortManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}

pub fn render_manifest(cohort: &CohortManifest, provenance: Option<&Provenance>) -> String {
    let mut out = String::new();
    if let Some(p) = provenance {
        out.push_str(&p.header_line());
        out.push('\n');
    }
    for p in &cohort.patients {
        out.push_str(&serde_json::to_string(p).expect("patient serialises"));
        out.push('\n');
    }
    out
}

pub fn save_manifest(cohort: &CohortManifest, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
    cohort.validate()?;
    fs::write(path, render_manifest(cohort, provenance)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::types::tests::visit;
    use crate::cohort::types::*;
    use std::collections::BTreeMap;

    fn small_cohort() -> CohortManifest {
        let mut v1 = visit("P1-V1", 80, 0);
        v1.biometry.crl = Some(3.2);
        let mut v2 = visit("P1-V2", 80, 100);
        v2.biometry = BiometryMeasurements {
            bpd: Some(5.5),
            hc: Some(20.0),
            ac: Some(18.0),
            fl: Some(4.0),
            crl: None,
        };
        v2.formula_ga_estimates = Some(BTreeMap::from([("hadlock".to_string(), 181.25)]));
        v2.media.push(MediaRef {
            kind: MediaKind::Video,
            anatomy: Anatomy::Abdomen,
            path: "media/P1/P1-V2/video_abdomen".into(),
            pixel_spacing: 0.24,
            frame_count: Some(48),
        });
        let p1 = Patient {
            patient_id: "P1".into(),
            country: Country::Zambia,
            device: Device::Sonosite,
            visits: vec![v1, v2],
        };
        let p2 = Patient {
            patient_id: "P2".into(),
            country: Country::US,
            device: Device::GE,
            visits: vec![visit("P2-V1", 200, 0)],
        };
        let p3 = Patient {
            patient_id: "P3".into(),
            country: Country::Zambia,
            device: Device::GE,
            visits: vec![visit("P3-V1", 150, 0), visit("P3-V2", 150, 7)],
        };
        CohortManifest {
            patients: vec![p1, p2, p3],
        }
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let c = small_cohort();
        save_manifest(&c, &path, Some(&Provenance::new("test", Some(1)))).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back, c);
        // absent biometry fields stay absent on disk
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("null"));
    }

    #[test]
    fn duplicated_patient_is_rejected() {
        let c = small_cohort();
        let mut text = render_manifest(&c, None);
        let first = text.lines().next().unwrap().to_string();
        text.push_str(&first);
        assert!(matches!(parse_manifest(&text, "m"), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_file_is_an_empty_cohort() {
        assert_eq!(parse_manifest("", "m").unwrap(), CohortManifest::default());
        assert_eq!(parse_manifest("# header only\n\n", "m").unwrap(), CohortManifest::default());
    }

    #[test]
    fn malformed_line_names_its_number() {
        let c = small_cohort();
        let text = format!("# header\n{}{{not json\n", render_manifest(&c, None));
        match parse_manifest(&text, "m.jsonl") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_enum_is_a_validation_error() {
        let c = small_cohort();
        let text = render_manifest(&c, None).replacen("\"Sonosite\"", "\"Butterfly\"", 1);
        assert!(matches!(parse_manifest(&text, "m"), Err(Error::Validation(_))));
    }
}
