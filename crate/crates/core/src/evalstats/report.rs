//! Comparison tables, binned error series and sign tests over a cohort.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::stats::{mae_me, paired_diff_ci, sign_test_median, window_bin, BinRow, ErrorSummary, PairedDiff, StatsConfig};
use super::subgroup::{Criterion, SizeGroup, SubgroupContext};
use crate::cohort::{ground_truth_ga, CohortManifest, Country, Device};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// visit_id -> method -> GA estimate in days (models and baselines alike).
pub type MethodEstimates = BTreeMap<String, BTreeMap<String, f64>>;

/// Which methods the report compares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSpec {
    /// Method compared in every subgroup table (the ensemble).
    pub primary: String,
    /// Methods shown side by side in the overall table.
    pub overall_methods: Vec<String>,
    /// Standard-biometry reference method.
    pub reference: String,
    /// Formula baselines compared on second/third-trimester visits.
    pub formulae: Vec<String>,
    /// Restrict sampling to these patients (e.g. the test split).
    pub patients: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: String,
    pub errors: ErrorSummary,
    /// `None` for the reference column.
    pub diff: Option<PairedDiff>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientRow {
    pub patient_id: String,
    pub visit_id: String,
    pub gt_ga_days: f64,
    /// estimate - ground truth, per method in analysis order (reference last)
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub table: String,
    pub subgroup: String,
    pub criterion: String,
    pub n: usize,
    pub gt_mean: f64,
    pub gt_sd: f64,
    pub reference: String,
    /// Compared methods first, reference last.
    pub methods: Vec<MethodRow>,
    pub rows: Vec<PatientRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignRow {
    pub subgroup: String,
    pub n: usize,
    pub median_diff: f64,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub analyses: Vec<Analysis>,
    pub bin_methods: Vec<String>,
    pub bins: Vec<BinRow>,
    pub sign_tests: Vec<SignRow>,
}

struct Plan {
    table: &'static str,
    subgroup: String,
    criterion: Criterion,
    methods: Vec<String>,
    reference: String,
}

fn plans(spec: &ReportSpec) -> Vec<Plan> {
    let mut out = Vec::new();
    let primary = vec![spec.primary.clone()];
    let plan = |table, subgroup: &str, criterion, methods: &Vec<String>, reference: &str| Plan {
        table,
        subgroup: subgroup.to_string(),
        criterion,
        methods: methods.clone(),
        reference: reference.to_string(),
    };
    out.push(plan("table1", "overall", Criterion::All, &spec.overall_methods, &spec.reference));
    for t in 1..=3u8 {
        out.push(plan("table2", &format!("trimester_{t}"), Criterion::Trimester(vec![t]), &primary, &spec.reference));
    }
    for (c, d) in [(Country::US, Device::GE), (Country::Zambia, Device::GE), (Country::Zambia, Device::Sonosite)] {
        out.push(plan("table3", &format!("{c}-{d}"), Criterion::Site(c, d), &primary, &spec.reference));
    }
    for f in &spec.formulae {
        out.push(plan("table4", &format!("t2_t3_vs_{f}"), Criterion::Trimester(vec![2, 3]), &primary, f));
    }
    for g in SizeGroup::ALL {
        let c = Criterion::Size(g);
        let name = c.to_string().trim_start_matches("size=").to_string();
        out.push(plan("table5", &name, c, &primary, &spec.reference));
    }
    out
}

fn run(
    plan: &Plan,
    cohort: &CohortManifest,
    estimates: &MethodEstimates,
    spec: &ReportSpec,
    ctx: &SubgroupContext,
    cfg: &StatsConfig,
) -> Result<Analysis> {
    plan.criterion.check(ctx)?;
    let seed = derive_seed(cfg.seed, &format!("{}/{}", plan.table, plan.subgroup));
    let eligible = |p: &crate::cohort::Patient, v: &crate::cohort::Visit| {
        spec.patients.as_ref().is_none_or(|s| s.contains(&p.patient_id)) && plan.criterion.matches(p, v, ctx)
    };
    let selected = super::stats::select_one_visit_per_patient(cohort, eligible, seed);
    let all_methods: Vec<&String> = plan.methods.iter().chain([&plan.reference]).collect();
    let mut rows = Vec::with_capacity(selected.len());
    for (p, v) in &selected {
        let gt = ground_truth_ga(v)? as f64;
        let per_visit = estimates.get(&v.visit_id);
        let errors = all_methods
            .iter()
            .map(|m| {
                per_visit.and_then(|e| e.get(*m)).map(|x| x - gt).ok_or_else(|| Error::MissingEstimate {
                    what: (*m).clone(),
                    visit_id: v.visit_id.clone(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(PatientRow {
            patient_id: p.patient_id.clone(),
            visit_id: v.visit_id.clone(),
            gt_ga_days: gt,
            errors,
        });
    }
    let n = rows.len();
    let (gt_mean, gt_sd) = if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let gts: Vec<f64> = rows.iter().map(|r| r.gt_ga_days).collect();
        let s = mae_me(&gts)?;
        (s.me, s.sd)
    };
    let column = |j: usize| rows.iter().map(|r| r.errors[j]).collect::<Vec<f64>>();
    let reference_col = column(all_methods.len() - 1);
    let mut methods = Vec::new();
    if n > 0 {
        for (j, m) in all_methods.iter().enumerate() {
            let col = column(j);
            let is_ref = j == all_methods.len() - 1;
            let diff = if is_ref || n < 2 {
                None
            } else {
                Some(paired_diff_ci(&col, &reference_col, cfg.ci_method)?)
            };
            methods.push(MethodRow {
                method: (*m).clone(),
                errors: mae_me(&col)?,
                diff,
            });
        }
    }
    Ok(Analysis {
        table: plan.table.to_string(),
        subgroup: plan.subgroup.clone(),
        criterion: plan.criterion.to_string(),
        n,
        gt_mean,
        gt_sd,
        reference: plan.reference.clone(),
        methods,
        rows,
    })
}

/// Runs every analysis. Sampling is redone independently per subgroup with a
/// seed derived from the table and subgroup names. Size subgroups are left
/// out when `ctx` has no percentile table.
pub fn build_report(
    cohort: &CohortManifest,
    estimates: &MethodEstimates,
    spec: &ReportSpec,
    ctx: &SubgroupContext,
    cfg: &StatsConfig,
) -> Result<EvalReport> {
    let analyses = plans(spec)
        .iter()
        .filter(|p| p.criterion.check(ctx).is_ok())
        .map(|p| run(p, cohort, estimates, spec, ctx, cfg))
        .collect::<Result<Vec<_>>>()?;

    let overall = &analyses[0];
    let bin_methods: Vec<String> = spec.overall_methods.iter().chain([&spec.reference]).cloned().collect();
    let series: Vec<(f64, Vec<f64>)> = overall.rows.iter().map(|r| (r.gt_ga_days, r.errors.clone())).collect();
    let bins = window_bin(&series, cfg.bin_width_days)?;

    let sign_tests = analyses
        .iter()
        .filter(|a| a.table == "table5" || a.table == "table1")
        .map(|a| {
            let diffs = primary_diffs(a);
            let mut sorted = diffs.clone();
            sorted.sort_by(f64::total_cmp);
            let median_diff = if sorted.is_empty() {
                f64::NAN
            } else {
                crate::growth::percentile(&sorted, 0.5)?
            };
            Ok(SignRow {
                subgroup: a.subgroup.clone(),
                n: diffs.len(),
                median_diff,
                p_value: sign_test_median(&diffs).ok(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EvalReport {
        analyses,
        bin_methods,
        bins,
        sign_tests,
    })
}

/// |first method error| - |reference error| per patient.
fn primary_diffs(a: &Analysis) -> Vec<f64> {
    a.rows
        .iter()
        .map(|r| r.errors[0].abs() - r.errors[r.errors.len() - 1].abs())
        .collect()
}

fn f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.4}")
    }
}

impl EvalReport {
    pub fn analysis(&self, table: &str, subgroup: &str) -> Option<&Analysis> {
        self.analyses.iter().find(|a| a.table == table && a.subgroup == subgroup)
    }

    fn table_csv(&self, table: &str) -> String {
        let mut out = String::from(
            "table,subgroup,criterion,method,role,n,gt_mean,gt_sd,me,me_sd,mae,mae_sd,mae_diff,mae_diff_sd,ci_lo,ci_hi\n",
        );
        for a in self.analyses.iter().filter(|a| a.table == table) {
            if a.methods.is_empty() {
                let _ = writeln!(out, "{},{},{},,,0,,,,,,,,,,", a.table, a.subgroup, a.criterion);
            }
            for m in &a.methods {
                let role = if m.diff.is_none() && m.method == a.reference { "reference" } else { "compared" };
                let (md, sd, lo, hi) = m
                    .diff
                    .map_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN), |d| (d.mean_diff, d.sd_diff, d.ci_lo, d.ci_hi));
                let _ = writeln!(
                    out,
                    "{},{},{},{},{role},{},{},{},{},{},{},{},{},{},{},{}",
                    a.table,
                    a.subgroup,
                    a.criterion,
                    m.method,
                    a.n,
                    f(a.gt_mean),
                    f(a.gt_sd),
                    f(m.errors.me),
                    f(m.errors.sd),
                    f(m.errors.mae),
                    f(m.errors.sd_abs),
                    f(md),
                    f(sd),
                    f(lo),
                    f(hi)
                );
            }
        }
        out
    }

    /// Plain-text rendering, one block per analysis.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut last_table = "";
        for a in &self.analyses {
            if a.table != last_table {
                let title = match a.table.as_str() {
                    "table1" => "Overall performance",
                    "table2" => "By trimester",
                    "table3" => "By country and device",
                    "table4" => "Against alternative formulae (second and third trimester)",
                    _ => "By fetal size (AC percentile)",
                };
                let _ = writeln!(out, "\n== {}: {title} ==", a.table);
                last_table = &a.table;
            }
            let _ = writeln!(out, "\n[{}] {}  N = {}", a.subgroup, a.criterion, a.n);
            if a.methods.is_empty() {
                let _ = writeln!(out, "  (no eligible patients)");
                continue;
            }
            let cell = |s: String| format!("{s:>20}");
            let mut line = format!("  {:<22}", "");
            for m in &a.methods {
                line += &cell(m.method.clone());
            }
            let _ = writeln!(out, "{line}");
            let row = |label: &str, values: Vec<String>| {
                let mut l = format!("  {label:<22}");
                for v in values {
                    l += &cell(v);
                }
                l
            };
            let pm = |a: f64, b: f64| format!("{a:.2} ± {b:.2}");
            let _ = writeln!(out, "{}", row("GA (days)", a.methods.iter().map(|_| pm(a.gt_mean, a.gt_sd)).collect()));
            let _ = writeln!(out, "{}", row("ME ± sd (days)", a.methods.iter().map(|m| pm(m.errors.me, m.errors.sd)).collect()));
            let _ = writeln!(out, "{}", row("MAE ± sd (days)", a.methods.iter().map(|m| pm(m.errors.mae, m.errors.sd_abs)).collect()));
            let diff_cells = |g: &dyn Fn(&PairedDiff) -> String| {
                a.methods
                    .iter()
                    .map(|m| match &m.diff {
                        Some(d) => g(d),
                        None if m.method == a.reference => "Reference".to_string(),
                        None => "n/a".to_string(),
                    })
                    .collect::<Vec<_>>()
            };
            let _ = writeln!(out, "{}", row("MAE difference ± sd", diff_cells(&|d| pm(d.mean_diff, d.sd_diff))));
            let _ = writeln!(out, "{}", row("95% CI", diff_cells(&|d| format!("[{:.1}, {:.1}]", d.ci_lo, d.ci_hi))));
        }
        out.push_str("\n== Sign test of the median MAE difference (H1: median < 0) ==\n");
        for s in &self.sign_tests {
            let p = s.p_value.map_or("undefined".to_string(), |p| format!("{p:.4e}"));
            let _ = writeln!(out, "  {:<16} n = {:<5} median = {:>8.3}  p = {p}", s.subgroup, s.n, s.median_diff);
        }
        out
    }

    fn bins_csv(&self) -> String {
        let mut out = String::from("bin,ga_lo,ga_hi,n");
        for m in &self.bin_methods {
            out.push_str(&format!(",mae_{m}"));
        }
        out.push('\n');
        for b in &self.bins {
            out.push_str(&format!("{},{},{},{}", b.bin, b.ga_lo, b.ga_hi, b.n));
            for v in &b.mae {
                out.push_str(&format!(",{}", f(*v)));
            }
            out.push('\n');
        }
        out
    }

    fn sign_csv(&self) -> String {
        let mut out = String::from("subgroup,n,median_diff,p_value\n");
        for s in &self.sign_tests {
            let p = s.p_value.map_or(String::new(), |p| format!("{p:.6e}"));
            out.push_str(&format!("{},{},{},{p}\n", s.subgroup, s.n, f(s.median_diff)));
        }
        out
    }

    fn diffs_csv(&self) -> String {
        let mut out = String::from("subgroup,patient_id,visit_id,gt_ga_days,mae_diff\n");
        for a in self.analyses.iter().filter(|a| a.table == "table5" || a.table == "table1") {
            for (r, d) in a.rows.iter().zip(primary_diffs(a)) {
                out.push_str(&format!("{},{},{},{},{}\n", a.subgroup, r.patient_id, r.visit_id, r.gt_ga_days, f(d)));
            }
        }
        out
    }

    /// Every output file as (file name, contents); `header` is prepended
    /// (as a comment line) to each.
    pub fn files(&self, header: &str) -> Vec<(String, String)> {
        let with = |body: String| format!("{header}\n{body}");
        let mut files: Vec<(String, String)> = ["table1", "table2", "table3", "table4", "table5"]
            .iter()
            .map(|t| (format!("{t}.csv"), with(self.table_csv(t))))
            .collect();
        files.push(("report.txt".into(), with(self.to_text())));
        files.push(("figure1_bins.csv".into(), with(self.bins_csv())));
        files.push(("figure2_sign.csv".into(), with(self.sign_csv())));
        files.push(("figure2_diffs.csv".into(), with(self.diffs_csv())));
        files.push(("figure1.gp".into(), with(self.figure1_script())));
        files.push(("figure2.gp".into(), with(figure2_script())));
        files
    }

    fn figure1_script(&self) -> String {
        let mut s = String::from(
            "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n\
             set xlabel 'Ground-truth GA (days)'\nset ylabel 'MAE (days)'\n\
             set terminal pngcairo size 900,600\nset output 'figure1.png'\nplot ",
        );
        let plots: Vec<String> = self
            .bin_methods
            .iter()
            .enumerate()
            .map(|(i, m)| format!("'figure1_bins.csv' using (($2+$3)/2):{} with linespoints title '{m}'", 5 + i))
            .collect();
        s.push_str(&plots.join(", \\\n     "));
        s.push('\n');
        s
    }
}

fn figure2_script() -> String {
    "set datafile separator ','\nset datafile commentschars '#'\nset key off\n\
     set xlabel 'Ground-truth GA (days)'\nset ylabel '|model error| - |reference error| (days)'\n\
     set terminal pngcairo size 900,600\nset output 'figure2.png'\n\
     plot 'figure2_diffs.csv' every ::1 using 4:5 with points pt 7 ps 0.4, 0 with lines lc rgb 'black'\n"
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::tests::visit;
    use crate::cohort::Patient;

    fn setup() -> (CohortManifest, MethodEstimates) {
        let mut patients = Vec::new();
        let mut est = MethodEstimates::new();
        for i in 0..60 {
            let id = format!("P{i:02}");
            let base = 60 + (i as i64 * 4) % 220;
            let visits: Vec<_> = (0..2).map(|k| visit(&format!("{id}-V{k}"), base, k * 20)).collect();
            for v in &visits {
                let gt = ground_truth_ga(v).unwrap() as f64;
                let e = est.entry(v.visit_id.clone()).or_default();
                e.insert("model".into(), gt + if i % 2 == 0 { 2.0 } else { -1.0 });
                e.insert("ref".into(), gt + if i % 3 == 0 { 5.0 } else { -3.0 });
            }
            let (country, device) = [(Country::US, Device::GE), (Country::Zambia, Device::GE), (Country::Zambia, Device::Sonosite)][i % 3];
            patients.push(Patient {
                patient_id: id,
                country,
                device,
                visits,
            });
        }
        (CohortManifest { patients }, est)
    }

    fn spec(reference: &str) -> ReportSpec {
        ReportSpec {
            primary: "model".into(),
            overall_methods: vec!["model".into()],
            reference: reference.into(),
            formulae: vec![reference.into()],
            patients: None,
        }
    }

    fn table() -> crate::growth::PercentileTable {
        crate::growth::PercentileTable { cells: BTreeMap::new() }
    }

    #[test]
    fn self_comparison_is_zero() {
        let (c, e) = setup();
        let t = table();
        let ctx = SubgroupContext { growth: Some(&t) };
        let r = build_report(&c, &e, &spec("model"), &ctx, &StatsConfig::default()).unwrap();
        let a = r.analysis("table1", "overall").unwrap();
        let d = a.methods[0].diff.unwrap();
        assert_eq!((d.mean_diff, d.ci_lo, d.ci_hi), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rows_and_patient_counts() {
        let (c, e) = setup();
        let t = table();
        let ctx = SubgroupContext { growth: Some(&t) };
        let r = build_report(&c, &e, &spec("ref"), &ctx, &StatsConfig::default()).unwrap();
        let names: Vec<String> = r.analyses.iter().map(|a| format!("{}/{}", a.table, a.subgroup)).collect();
        for want in ["table1/overall", "table2/trimester_1", "table2/trimester_3", "table3/Zambia-Sonosite", "table4/t2_t3_vs_ref", "table5/sga", "table5/severe_sga", "table5/lga"] {
            assert!(names.contains(&want.to_string()), "{want} missing from {names:?}");
        }
        let overall = r.analysis("table1", "overall").unwrap();
        assert_eq!(overall.n, 60);
        for a in &r.analyses {
            let distinct: BTreeSet<_> = a.rows.iter().map(|r| &r.patient_id).collect();
            assert_eq!(distinct.len(), a.n);
        }
        let by_site: usize = ["US-GE", "Zambia-GE", "Zambia-Sonosite"].iter().map(|s| r.analysis("table3", s).unwrap().n).sum();
        assert_eq!(by_site, 60);
    }

    #[test]
    fn deterministic_files_and_missing_estimate() {
        let (c, mut e) = setup();
        let t = table();
        let ctx = SubgroupContext { growth: Some(&t) };
        let cfg = StatsConfig { seed: 4, ..Default::default() };
        let a = build_report(&c, &e, &spec("ref"), &ctx, &cfg).unwrap().files("# h");
        let b = build_report(&c, &e, &spec("ref"), &ctx, &cfg).unwrap().files("# h");
        assert_eq!(a, b);
        assert!(a.iter().all(|(_, body)| body.starts_with("# h\n")));

        e.get_mut("P07-V0").unwrap().remove("ref");
        e.get_mut("P07-V1").unwrap().remove("ref");
        match build_report(&c, &e, &spec("ref"), &ctx, &cfg) {
            Err(Error::MissingEstimate { what, visit_id }) => {
                assert_eq!(what, "ref");
                assert!(visit_id.starts_with("P07"));
            }
            other => panic!("{other:?}"),
        }
    }
}
