use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::expr::{parse_expression, Expr};
use crate::cohort::{BiometryMeasurements, Visit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputUnit {
    Weeks,
    Days,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormulaSpec {
    pub name: String,
    pub expression: Expr,
    pub output_unit: OutputUnit,
    pub ga_range_days: (f64, f64),
    pub required_vars: BTreeSet<String>,
}

/// On-disk form of one formula.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecRecord {
    name: String,
    expression: String,
    output_unit: OutputUnit,
    ga_range_days: (f64, f64),
    #[serde(default)]
    required_vars: Option<BTreeSet<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    Wrapped { formulae: Vec<SpecRecord> },
    Bare(Vec<SpecRecord>),
}

impl FormulaSpec {
    /// Builds a spec; `required_vars` defaults to the variables the
    /// expression references and must cover all of them.
    pub fn new(
        name: &str,
        expression: &str,
        output_unit: OutputUnit,
        ga_range_days: (f64, f64),
        required_vars: Option<BTreeSet<String>>,
    ) -> Result<Self> {
        let expression = parse_expression(expression)?;
        let used = expression.variables();
        let required_vars = required_vars.unwrap_or_else(|| used.clone());
        if let Some(v) = used.difference(&required_vars).next() {
            return Err(Error::Validation(format!(
                "formula {name}: expression uses `{v}` which is not among its required_vars"
            )));
        }
        if let Some(v) = required_vars.iter().find(|v| !BiometryMeasurements::VARIABLES.contains(&v.as_str())) {
            return Err(Error::Validation(format!("formula {name}: unknown required variable `{v}`")));
        }
        if !(ga_range_days.0 < ga_range_days.1) {
            return Err(Error::Validation(format!(
                "formula {name}: GA range [{}, {}] is not increasing",
                ga_range_days.0, ga_range_days.1
            )));
        }
        Ok(Self {
            name: name.to_string(),
            expression,
            output_unit,
            ga_range_days,
            required_vars,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormulaResult {
    pub ga_days: f64,
    /// The value lies outside the formula's applicability window.
    pub out_of_range: bool,
}

pub fn eval_formula(spec: &FormulaSpec, m: &BiometryMeasurements) -> Result<FormulaResult> {
    if let Some(v) = spec.required_vars.iter().find(|v| m.get(v).is_none()) {
        return Err(Error::MissingVariable {
            formula: spec.name.clone(),
            variable: v.clone(),
        });
    }
    let raw = spec.expression.eval(m)?;
    let ga_days = match spec.output_unit {
        OutputUnit::Weeks => raw * 7.0,
        OutputUnit::Days => raw,
    };
    let (lo, hi) = spec.ga_range_days;
    Ok(FormulaResult {
        ga_days,
        out_of_range: ga_days < lo || ga_days > hi,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FormulaLibrary {
    specs: BTreeMap<String, FormulaSpec>,
}

impl FormulaLibrary {
    pub fn new(specs: Vec<FormulaSpec>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for s in specs {
            let name = s.name.clone();
            if map.insert(name.clone(), s).is_some() {
                return Err(Error::Validation(format!("formula `{name}` defined twice")));
            }
        }
        Ok(Self { specs: map })
    }

    /// Accepts either a JSON array of formula records or an object with a
    /// `formulae` array (other keys, e.g. notes, are ignored).
    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "formula config".into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let records = match parsed {
            ConfigFile::Wrapped { formulae } => formulae,
            ConfigFile::Bare(r) => r,
        };
        Self::new(
            records
                .into_iter()
                .map(|r| FormulaSpec::new(&r.name, &r.expression, r.output_unit, r.ga_range_days, r.required_vars))
                .collect::<Result<_>>()?,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn get(&self, name: &str) -> Option<&FormulaSpec> {
        self.specs.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineSource {
    /// Value recorded in the manifest.
    Recorded,
    /// Value computed from the visit's biometry.
    Computed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineValue {
    pub ga_days: f64,
    pub source: BaselineSource,
    pub out_of_range: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineEstimates {
    pub values: BTreeMap<String, BaselineValue>,
    /// formula name -> reason it produced no value
    pub skipped: BTreeMap<String, String>,
}

/// Baseline GA estimates for a visit. A value recorded in the manifest takes
/// precedence over the engine; formulae that cannot be evaluated are skipped
/// with a reason.
pub fn baseline_estimates(visit: &Visit, library: &FormulaLibrary, names: &[&str]) -> BaselineEstimates {
    let mut out = BaselineEstimates::default();
    for &name in names {
        if let Some(ga_days) = visit.recorded_estimate(name) {
            let out_of_range = library.get(name).is_some_and(|s| {
                let (lo, hi) = s.ga_range_days;
                ga_days < lo || ga_days > hi
            });
            out.values.insert(
                name.to_string(),
                BaselineValue {
                    ga_days,
                    source: BaselineSource::Recorded,
                    out_of_range,
                },
            );
            continue;
        }
        let Some(spec) = library.get(name) else {
            out.skipped.insert(name.to_string(), "no recorded value and no formula of that name".into());
            continue;
        };
        match eval_formula(spec, &visit.biometry) {
            Ok(r) => {
                out.values.insert(
                    name.to_string(),
                    BaselineValue {
                        ga_days: r.ga_days,
                        source: BaselineSource::Computed,
                        out_of_range: r.out_of_range,
                    },
                );
            }
            Err(e) => {
                out.skipped.insert(name.to_string(), e.to_string());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::tests::visit;

    fn lib() -> FormulaLibrary {
        FormulaLibrary::new(vec![
            FormulaSpec::new("crl_id", "crl", OutputUnit::Days, (42.0, 98.0), None).unwrap(),
            FormulaSpec::new(
                "weeks_lin",
                "10.85 + 0.060*hc*fl + 0.67*bpd + 0.168*ac",
                OutputUnit::Weeks,
                (98.0, 300.0),
                None,
            )
            .unwrap(),
            FormulaSpec::new("late", "hc*7", OutputUnit::Days, (98.0, 300.0), None).unwrap(),
        ])
        .unwrap()
    }

    fn full() -> BiometryMeasurements {
        BiometryMeasurements {
            hc: Some(20.0),
            fl: Some(4.0),
            bpd: Some(5.5),
            ac: Some(18.0),
            crl: None,
        }
    }

    #[test]
    fn identity_and_weeks() {
        let l = lib();
        let m = BiometryMeasurements {
            crl: Some(60.0),
            ..Default::default()
        };
        assert_eq!(eval_formula(l.get("crl_id").unwrap(), &m).unwrap().ga_days, 60.0);
        let r = eval_formula(l.get("weeks_lin").unwrap(), &full()).unwrap();
        assert!((r.ga_days - 156.513).abs() < 1e-9);
        assert!(!r.out_of_range);
    }

    #[test]
    fn out_of_range_is_flagged_not_rejected() {
        let m = BiometryMeasurements {
            hc: Some(10.0),
            ..Default::default()
        };
        let r = eval_formula(lib().get("late").unwrap(), &m).unwrap();
        assert_eq!(r.ga_days, 70.0);
        assert!(r.out_of_range);
    }

    #[test]
    fn missing_variable_is_named() {
        match eval_formula(lib().get("weeks_lin").unwrap(), &BiometryMeasurements::default()) {
            Err(Error::MissingVariable { variable, .. }) => assert_eq!(variable, "ac"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        let used_not_declared = FormulaSpec::new(
            "x",
            "hc+ac",
            OutputUnit::Days,
            (0.0, 1.0),
            Some(BTreeSet::from(["hc".to_string()])),
        );
        assert!(used_not_declared.is_err());
        assert!(FormulaSpec::new("x", "hc", OutputUnit::Days, (5.0, 5.0), None).is_err());
        let dup = FormulaLibrary::new(vec![
            FormulaSpec::new("a", "hc", OutputUnit::Days, (0.0, 1.0), None).unwrap(),
            FormulaSpec::new("a", "ac", OutputUnit::Days, (0.0, 1.0), None).unwrap(),
        ]);
        assert!(dup.is_err());
    }

    #[test]
    fn availability_filter() {
        let l = lib();
        let mut v = visit("v", 70, 0);
        v.biometry.crl = Some(3.0);
        let b = baseline_estimates(&v, &l, &["crl_id", "weeks_lin", "late"]);
        assert_eq!(b.values.keys().collect::<Vec<_>>(), ["crl_id"]);
        assert_eq!(b.skipped.len(), 2);

        v.biometry = full();
        let b = baseline_estimates(&v, &l, &["crl_id", "weeks_lin", "late"]);
        assert_eq!(b.values.keys().collect::<Vec<_>>(), ["late", "weeks_lin"]);
    }

    #[test]
    fn recorded_value_takes_precedence() {
        let l = lib();
        let mut v = visit("v", 150, 0);
        v.biometry = full();
        let computed = baseline_estimates(&v, &l, &["weeks_lin"]).values["weeks_lin"];
        assert_eq!(computed.source, BaselineSource::Computed);
        v.formula_ga_estimates = Some(BTreeMap::from([("weeks_lin".to_string(), 149.5)]));
        let recorded = baseline_estimates(&v, &l, &["weeks_lin"]).values["weeks_lin"];
        assert_eq!(recorded.source, BaselineSource::Recorded);
        assert_eq!(recorded.ga_days, 149.5);
    }

    #[test]
    fn config_forms() {
        let rec = r#"{"name":"a","expression":"crl*2","output_unit":"days","ga_range_days":[42,98]}"#;
        let bare = FormulaLibrary::from_json(&format!("[{rec}]")).unwrap();
        let wrapped = FormulaLibrary::from_json(&format!(r#"{{"note":"x","formulae":[{rec}]}}"#)).unwrap();
        assert_eq!(bare, wrapped);
        assert_eq!(bare.get("a").unwrap().required_vars, BTreeSet::from(["crl".to_string()]));
        assert!(FormulaLibrary::from_json(r#"[{"name":"a","expression":"crl","output_unit":"months","ga_range_days":[1,2]}]"#).is_err());
    }
}
