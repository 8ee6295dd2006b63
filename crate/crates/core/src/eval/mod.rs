//! Recognizability, ROC geometry, plug-in f-CMI and theory checks.

mod fcmi;
mod gap;
mod probe;
mod roc;
mod theory;

pub use fcmi::{
    estimate_fcmi, fcmi_bound, plugin_mi, FcmiEstimate, FcmiFit, FcmiJob, FcmiOutcome, FcmiProtocol,
};
pub use gap::{average_ranks, gap_report, spearman, GapReport, GapRow};
pub use probe::{
    measure_recognizability, probe_representations, ProbeArchitecture, ProbeConfig, ProbeInput, ProbeResult,
};
pub use roc::{
    achievable_region, auc_roc, recognizability, recognizability_from_auc, recognizability_report,
    roc_conditions_check, roc_curve, Polygon, RecognizabilityReport, RocConditions, RocCurve, ScoreSummary,
};
pub use theory::{
    default_mu_grid, gaussian_recognizability, gaussian_roc_curve, lemma1_numeric, theorem1_gaussian_check,
    Lemma1Result, Theorem1Row, BOUND_CONSTANT,
};
