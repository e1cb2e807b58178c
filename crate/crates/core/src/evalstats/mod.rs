//! Evaluation protocol: error metrics, paired comparisons, one visit per
//! patient sampling, subgroups, binning and sign tests.

mod report;
mod stats;
mod subgroup;

pub use report::{build_report, Analysis, EvalReport, MethodEstimates, MethodRow, PatientRow, ReportSpec, SignRow};
pub use stats::{
    bin_index, ci_from_summary, mae_me, paired_diff_ci, select_one_visit_per_patient, sign_test_median, window_bin,
    BinRow, CiMethod, ErrorSummary, PairedDiff, StatsConfig,
};
pub use subgroup::{subgroup_filter, Criterion, SizeGroup, SubgroupContext};
