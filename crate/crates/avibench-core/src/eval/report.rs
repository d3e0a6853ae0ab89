//! Full evaluation report for one submission against one ground truth:
//! AUC with bootstrap CI, ROC points, calibration table, and the per-site
//! breakdown when site tags are available.

use serde::{Deserialize, Serialize};

use super::{
    auc, bootstrap_auc, calibration_table, per_site_auc, roc_points, BootstrapCi,
    CalibrationTable, EvalError, PerSiteAuc, RocCurve, SubmissionSet,
};
use crate::manifest::DatasetManifest;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub bootstrap: BootstrapCi,
    pub per_site: Option<PerSiteAuc>,
    pub roc: RocCurve,
    pub calibration: CalibrationTable,
    pub n_items: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportConfig {
    pub n_boot: usize,
    pub n_bins: usize,
    pub seed: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { n_boot: 1000, n_bins: 10, seed: 0 }
    }
}

pub fn evaluate(
    sub: &SubmissionSet,
    truth: &DatasetManifest,
    cfg: &ReportConfig,
) -> Result<EvalReport, EvalError> {
    let point = auc(sub, truth)?;
    let bootstrap = bootstrap_auc(sub, truth, cfg.n_boot, cfg.seed)?;
    let per_site = match per_site_auc(sub, truth) {
        Ok(p) => Some(p),
        Err(EvalError::NoSites) => None,
        Err(e) => return Err(e),
    };
    let roc = roc_points(sub, truth)?;
    let calibration = calibration_table(sub, truth, cfg.n_bins)?;
    Ok(EvalReport {
        auc: point,
        bootstrap,
        per_site,
        roc,
        calibration,
        n_items: sub.len(),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// ROC vertices as CSV (`fpr,tpr,threshold`).
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for (fpr, tpr, thr) in &self.roc.points {
            out.push_str(&format!("{fpr},{tpr},{thr}\n"));
        }
        out
    }

    /// Calibration table as CSV.
    pub fn calibration_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,mean_predicted,empirical_rate,count\n");
        for b in &self.calibration.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lo,
                b.hi,
                b.mean_predicted.map_or(String::new(), |v| v.to_string()),
                b.empirical_rate.map_or(String::new(), |v| v.to_string()),
                b.count
            ));
        }
        out
    }
}
