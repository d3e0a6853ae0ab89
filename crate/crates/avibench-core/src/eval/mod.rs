//! Evaluation of graded bird-detection outputs: midrank AUC, ROC curves,
//! bootstrap confidence intervals, site-stratified AUC, calibration tables,
//! score ensembling, re-validation candidates, and mismatch ranking.

pub mod platt;
pub mod rankpca;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{DatasetManifest, Label};
use crate::seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("duplicate item id: {0}")]
    DuplicateId(String),
    #[error("prediction {value} for item {item} outside [0,1]")]
    OutOfRange { item: String, value: f64 },
    #[error("bad header: expected itemid,prediction")]
    BadHeader,
    #[error("malformed prediction {token:?} for item {item}")]
    BadPrediction { item: String, token: String },
    #[error("missing prediction for labeled item {0}")]
    MissingPrediction(String),
    #[error("AUC undefined: ground truth has a single class")]
    SingleClassTruth,
    #[error("no site tags present in manifest")]
    NoSites,
    #[error("submissions cover different item sets")]
    ItemSetMismatch,
    #[error("need at least {0} submissions")]
    TooFewSubmissions(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// An item id -> prediction map, the unit of evaluation and submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionSet {
    pub predictions: BTreeMap<String, f64>,
    pub team: Option<String>,
    pub timestamp: Option<String>,
}

impl SubmissionSet {
    pub fn new(predictions: BTreeMap<String, f64>) -> Result<Self, EvalError> {
        for (item, &v) in &predictions {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(EvalError::OutOfRange { item: item.clone(), value: v });
            }
        }
        Ok(Self { predictions, team: None, timestamp: None })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

/// Parse submission CSV (`itemid,prediction` header). Entry point shared
/// with the fuzz targets and the challenge service.
pub fn parse_submission(bytes: &[u8]) -> Result<SubmissionSet, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    {
        let hdr = rdr.headers()?;
        if hdr.len() != 2 || &hdr[0] != "itemid" || &hdr[1] != "prediction" {
            return Err(EvalError::BadHeader);
        }
    }
    let mut predictions = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let item = rec.get(0).unwrap_or("").to_string();
        let tok = rec.get(1).unwrap_or("");
        let value: f64 = tok.parse().map_err(|_| EvalError::BadPrediction {
            item: item.clone(),
            token: tok.to_string(),
        })?;
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(EvalError::OutOfRange { item, value });
        }
        if predictions.insert(item.clone(), value).is_some() {
            return Err(EvalError::DuplicateId(item));
        }
    }
    SubmissionSet::new(predictions)
}

pub fn submission_csv(sub: &SubmissionSet) -> String {
    let mut out = String::from("itemid,prediction\n");
    for (item, v) in &sub.predictions {
        out.push_str(&format!("{item},{v}\n"));
    }
    out
}

pub fn load_submission(path: impl AsRef<std::path::Path>) -> Result<SubmissionSet, EvalError> {
    parse_submission(&std::fs::read(path)?)
}

pub fn write_submission(
    sub: &SubmissionSet,
    path: impl AsRef<std::path::Path>,
) -> Result<(), EvalError> {
    std::fs::write(path, submission_csv(sub))?;
    Ok(())
}

/// Join a submission with ground truth into (score, is_positive) pairs.
/// Unknown-label items are skipped; a labeled item without a prediction is
/// an error.
pub fn join_pairs(
    sub: &SubmissionSet,
    truth: &DatasetManifest,
) -> Result<Vec<(f64, bool)>, EvalError> {
    let mut pairs = Vec::new();
    for it in &truth.items {
        let positive = match it.label {
            Label::Positive => true,
            Label::Negative => false,
            Label::Unknown => continue,
        };
        let &score = sub
            .predictions
            .get(&it.item_id)
            .ok_or_else(|| EvalError::MissingPrediction(it.item_id.clone()))?;
        pairs.push((score, positive));
    }
    Ok(pairs)
}

/// Midrank (tie-corrected) AUC over (score, is_positive) pairs:
/// `AUC = (R+ - n+(n+ + 1)/2) / (n+ n-)` with tied scores receiving their
/// average rank, so ties count one half.
pub fn auc_pairs(pairs: &[(f64, bool)]) -> Result<f64, EvalError> {
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassTruth);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.partial_cmp(&pairs[b].0).unwrap());
    let mut rank_pos_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pairs[order[j + 1]].0 == pairs[order[i]].0 {
            j += 1;
        }
        // average 1-based rank over the tie group [i, j]
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if pairs[idx].1 {
                rank_pos_sum += midrank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_pos_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

pub fn auc(sub: &SubmissionSet, truth: &DatasetManifest) -> Result<f64, EvalError> {
    auc_pairs(&join_pairs(sub, truth)?)
}

/// AUC between two annotators: one annotator's binary labels used as scores
/// against the other's labels, midranks handling the massive ties.
pub fn interrater_auc(
    annotator_a: &DatasetManifest,
    annotator_b: &DatasetManifest,
) -> Result<f64, EvalError> {
    let mut predictions = BTreeMap::new();
    for it in &annotator_a.items {
        if let Some(v) = it.label.as_f64() {
            predictions.insert(it.item_id.clone(), v);
        }
    }
    let sub = SubmissionSet::new(predictions)?;
    // restrict truth to items annotator A labeled
    let truth = DatasetManifest {
        items: annotator_b
            .items
            .iter()
            .filter(|it| sub.predictions.contains_key(&it.item_id))
            .cloned()
            .collect(),
    };
    auc(&sub, &truth)
}

/// ROC curve vertices with thresholds; fpr and tpr both non-decreasing,
/// running from (0,0) to (1,1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false-positive rate, true-positive rate, threshold)
    #[serde(with = "roc_threshold_serde")]
    pub points: Vec<(f64, f64, f64)>,
}

/// The leading ROC vertex carries threshold +infinity, which JSON cannot
/// express; encode non-finite thresholds as null.
mod roc_threshold_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(
        points: &[(f64, f64, f64)],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let mapped: Vec<(f64, f64, Option<f64>)> = points
            .iter()
            .map(|&(fpr, tpr, thr)| (fpr, tpr, thr.is_finite().then_some(thr)))
            .collect();
        mapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<(f64, f64, f64)>, D::Error> {
        let mapped = Vec::<(f64, f64, Option<f64>)>::deserialize(d)?;
        Ok(mapped
            .into_iter()
            .map(|(fpr, tpr, thr)| (fpr, tpr, thr.unwrap_or(f64::INFINITY)))
            .collect())
    }
}

impl RocCurve {
    /// Trapezoidal area; agrees with the rank AUC to better than 1e-12.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }
}

pub fn roc_points_pairs(pairs: &[(f64, bool)]) -> Result<RocCurve, EvalError> {
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassTruth);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[b].0.partial_cmp(&pairs[a].0).unwrap());
    let mut points = vec![(0.0, 0.0, f64::INFINITY)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let thr = pairs[order[i]].0;
        while i < order.len() && pairs[order[i]].0 == thr {
            if pairs[order[i]].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64, thr));
    }
    Ok(RocCurve { points })
}

pub fn roc_points(sub: &SubmissionSet, truth: &DatasetManifest) -> Result<RocCurve, EvalError> {
    roc_points_pairs(&join_pairs(sub, truth)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_boot: usize,
    pub seed: u64,
    /// Resamples redrawn because they contained a single class.
    pub redraws: usize,
}

/// Percentile bootstrap over items resampled with replacement. Single-class
/// resamples are redrawn (and counted). Deterministic given the seed, with
/// per-replicate derived seeds so replicates can run in parallel.
pub fn bootstrap_auc_pairs(
    pairs: &[(f64, bool)],
    n_boot: usize,
    seed_val: u64,
) -> Result<BootstrapCi, EvalError> {
    let point = auc_pairs(pairs)?;
    if n_boot == 0 {
        return Err(EvalError::InvalidArgument("n_boot must be > 0".into()));
    }
    let results: Vec<(f64, usize)> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(seed::derive_seed_indexed(seed_val, "bootstrap", b as u64));
            let mut redraws = 0;
            loop {
                use rand::Rng;
                let resample: Vec<(f64, bool)> =
                    (0..pairs.len()).map(|_| pairs[rng.gen_range(0..pairs.len())]).collect();
                match auc_pairs(&resample) {
                    Ok(a) => return (a, redraws),
                    Err(_) => redraws += 1,
                }
            }
        })
        .collect();
    let mut aucs: Vec<f64> = results.iter().map(|r| r.0).collect();
    let redraws = results.iter().map(|r| r.1).sum();
    aucs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(BootstrapCi {
        point,
        lo: percentile(&aucs, 0.025),
        hi: percentile(&aucs, 0.975),
        n_boot,
        seed: seed_val,
        redraws,
    })
}

pub fn bootstrap_auc(
    sub: &SubmissionSet,
    truth: &DatasetManifest,
    n_boot: usize,
    seed_val: u64,
) -> Result<BootstrapCi, EvalError> {
    bootstrap_auc_pairs(&join_pairs(sub, truth)?, n_boot, seed_val)
}

/// Linear-interpolation percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerSiteAuc {
    pub by_site: BTreeMap<String, f64>,
    /// Unweighted arithmetic mean of per-site AUCs.
    pub mean: f64,
    /// AUC over all sites pooled together.
    pub pooled: f64,
    /// Sites skipped for having a single class (or only unknown labels).
    pub excluded: Vec<String>,
}

pub fn per_site_auc(sub: &SubmissionSet, truth: &DatasetManifest) -> Result<PerSiteAuc, EvalError> {
    let mut by_site_items: BTreeMap<&str, Vec<(f64, bool)>> = BTreeMap::new();
    let mut any_site = false;
    for it in &truth.items {
        let Some(site) = it.site.as_deref() else { continue };
        any_site = true;
        let positive = match it.label {
            Label::Positive => true,
            Label::Negative => false,
            Label::Unknown => continue,
        };
        let &score = sub
            .predictions
            .get(&it.item_id)
            .ok_or_else(|| EvalError::MissingPrediction(it.item_id.clone()))?;
        by_site_items.entry(site).or_default().push((score, positive));
    }
    if !any_site {
        return Err(EvalError::NoSites);
    }
    let mut by_site = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut pooled_pairs = Vec::new();
    for (site, pairs) in &by_site_items {
        pooled_pairs.extend_from_slice(pairs);
        match auc_pairs(pairs) {
            Ok(a) => {
                by_site.insert(site.to_string(), a);
            }
            Err(_) => excluded.push(site.to_string()),
        }
    }
    if by_site.is_empty() {
        return Err(EvalError::SingleClassTruth);
    }
    let mean = by_site.values().sum::<f64>() / by_site.len() as f64;
    let pooled = auc_pairs(&pooled_pairs)?;
    Ok(PerSiteAuc { by_site, mean, pooled, excluded })
}

/// Pearson R^2 between pooled AUC and mean per-site AUC across submissions.
pub fn pooled_vs_mean_r2(
    subs: &[SubmissionSet],
    truth: &DatasetManifest,
) -> Result<f64, EvalError> {
    if subs.len() < 2 {
        return Err(EvalError::TooFewSubmissions(2));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for sub in subs {
        let p = per_site_auc(sub, truth)?;
        xs.push(p.pooled);
        ys.push(p.mean);
    }
    Ok(pearson_r(&xs, &ys).powi(2))
}

fn pearson_r(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub mean_predicted: Option<f64>,
    /// Empirical positive rate; `None` for empty bins.
    pub empirical_rate: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub bins: Vec<CalibrationBin>,
}

impl CalibrationTable {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Max |empirical - mean predicted| over bins with at least `min_count`
    /// items; the headline calibration-error summary.
    pub fn max_deviation(&self, min_count: usize) -> f64 {
        self.bins
            .iter()
            .filter(|b| b.count >= min_count)
            .filter_map(|b| Some((b.empirical_rate? - b.mean_predicted?).abs()))
            .fold(0.0, f64::max)
    }
}

/// Equal-width score bins over [0,1] with per-bin empirical positive rates.
pub fn calibration_table(
    sub: &SubmissionSet,
    truth: &DatasetManifest,
    n_bins: usize,
) -> Result<CalibrationTable, EvalError> {
    if n_bins == 0 {
        return Err(EvalError::InvalidArgument("n_bins must be > 0".into()));
    }
    let pairs = join_pairs(sub, truth)?;
    let mut sums = vec![0.0; n_bins];
    let mut pos = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for &(score, positive) in &pairs {
        let b = ((score * n_bins as f64).floor() as usize).min(n_bins - 1);
        sums[b] += score;
        count[b] += 1;
        if positive {
            pos[b] += 1;
        }
    }
    let bins = (0..n_bins)
        .map(|b| CalibrationBin {
            lo: b as f64 / n_bins as f64,
            hi: (b + 1) as f64 / n_bins as f64,
            mean_predicted: (count[b] > 0).then(|| sums[b] / count[b] as f64),
            empirical_rate: (count[b] > 0).then(|| pos[b] as f64 / count[b] as f64),
            count: count[b],
        })
        .collect();
    Ok(CalibrationTable { bins })
}

/// Itemwise arithmetic mean of several submissions over a common item set.
pub fn ensemble_mean(subs: &[SubmissionSet]) -> Result<SubmissionSet, EvalError> {
    if subs.is_empty() {
        return Err(EvalError::TooFewSubmissions(1));
    }
    let items: BTreeSet<&String> = subs[0].predictions.keys().collect();
    for sub in &subs[1..] {
        if sub.predictions.keys().collect::<BTreeSet<_>>() != items {
            return Err(EvalError::ItemSetMismatch);
        }
    }
    let mut predictions = BTreeMap::new();
    for item in items {
        let mean = subs.iter().map(|s| s.predictions[item]).sum::<f64>() / subs.len() as f64;
        predictions.insert(item.clone(), mean);
    }
    SubmissionSet::new(predictions)
}

/// Items whose ground truth disagrees with the ensemble decision strongly
/// enough to warrant manual re-checking: negatives scoring above
/// `neg_thresh` and positives scoring below `pos_thresh`, ordered by
/// deviation magnitude.
pub fn revalidation_candidates(
    mean_sub: &SubmissionSet,
    truth: &DatasetManifest,
    neg_thresh: f64,
    pos_thresh: f64,
) -> Result<Vec<String>, EvalError> {
    let mut flagged: Vec<(f64, String)> = Vec::new();
    for it in &truth.items {
        let Some(label) = it.label.as_f64() else { continue };
        let &score = mean_sub
            .predictions
            .get(&it.item_id)
            .ok_or_else(|| EvalError::MissingPrediction(it.item_id.clone()))?;
        let hit = (label == 0.0 && score > neg_thresh) || (label == 1.0 && score < pos_thresh);
        if hit {
            flagged.push(((score - label).abs(), it.item_id.clone()));
        }
    }
    flagged.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    Ok(flagged.into_iter().map(|(_, id)| id).collect())
}

/// Error-category vocabulary for the mismatch annotation sheet.
pub const ERROR_CATEGORIES: &[&str] = &[
    "clear",
    "dontknow",
    "faint",
    "short-call",
    "noise-masking",
    "insect",
    "human",
    "rain",
    "unusual-bird",
    "misc-distractor",
    "misc-mammal",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MismatchItem {
    pub item_id: String,
    pub label: f64,
    pub score: f64,
    pub deviation: f64,
    /// Filled in by a human annotator; one of [`ERROR_CATEGORIES`].
    pub category: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MismatchSheet {
    pub items: Vec<MismatchItem>,
    pub categories: Vec<String>,
}

/// The top-k items by |score - label|, as an annotation sheet.
pub fn top_mismatched(
    sub: &SubmissionSet,
    truth: &DatasetManifest,
    k: usize,
) -> Result<MismatchSheet, EvalError> {
    let mut items: Vec<MismatchItem> = Vec::new();
    for it in &truth.items {
        let Some(label) = it.label.as_f64() else { continue };
        let &score = sub
            .predictions
            .get(&it.item_id)
            .ok_or_else(|| EvalError::MissingPrediction(it.item_id.clone()))?;
        items.push(MismatchItem {
            item_id: it.item_id.clone(),
            label,
            score,
            deviation: (score - label).abs(),
            category: None,
        });
    }
    items.sort_by(|a, b| {
        b.deviation
            .partial_cmp(&a.deviation)
            .unwrap()
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    items.truncate(k);
    Ok(MismatchSheet {
        items,
        categories: ERROR_CATEGORIES.iter().map(|s| s.to_string()).collect(),
    })
}
