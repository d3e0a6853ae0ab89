//! Platt scaling: fit a sigmoid `p = 1 / (1 + exp(A*s + B))` to map raw
//! scores to calibrated probabilities. The fitted map is monotone in the
//! scores (A < 0 for any positively-correlated detector), so ranking and
//! AUC are untouched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{join_pairs, EvalError, SubmissionSet};
use crate::manifest::DatasetManifest;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

/// Fit (A, B) by regularized log-loss with the standard label-smoothing
/// targets, via Newton iterations with backtracking.
pub fn platt_fit_pairs(pairs: &[(f64, bool)]) -> Result<PlattParams, EvalError> {
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassTruth);
    }
    // label-smoothing targets
    let t_pos = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let t_neg = 1.0 / (n_neg as f64 + 2.0);
    let targets: Vec<f64> = pairs.iter().map(|&(_, y)| if y { t_pos } else { t_neg }).collect();
    let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();

    let mut a = 0.0;
    let mut b = ((n_neg as f64 + 1.0) / (n_pos as f64 + 1.0)).ln();
    let mut loss = objective(&scores, &targets, a, b);
    const MAX_ITER: usize = 100;
    const SIGMA: f64 = 1e-12; // Hessian regularizer
    for _ in 0..MAX_ITER {
        // with p = sigma(-f), f = a*s + b:
        // dloss_i/df = t - p, d2loss_i/df2 = p(1-p)
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        let mut h11 = SIGMA;
        let mut h22 = SIGMA;
        let mut h12 = 0.0;
        for (&s, &t) in scores.iter().zip(&targets) {
            let f = a * s + b;
            let p = 1.0 / (1.0 + f.exp());
            let dldf = t - p;
            let d2ldf2 = p * (1.0 - p);
            g1 += dldf * s;
            g2 += dldf;
            h11 += d2ldf2 * s * s;
            h22 += d2ldf2;
            h12 += d2ldf2 * s;
        }
        let grad_norm = (g1 * g1 + g2 * g2).sqrt();
        if grad_norm < 1e-10 {
            break;
        }
        let det = h11 * h22 - h12 * h12;
        let (da, db) = if det.abs() < 1e-300 {
            (-g1, -g2)
        } else {
            (-(h22 * g1 - h12 * g2) / det, -(h11 * g2 - h12 * g1) / det)
        };
        // backtracking line search
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let na = a + step * da;
            let nb = b + step * db;
            let nl = objective(&scores, &targets, na, nb);
            if nl < loss - 1e-14 {
                a = na;
                b = nb;
                loss = nl;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(PlattParams { a, b })
}

fn objective(scores: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&s, &t)| {
            let f = a * s + b;
            // numerically stable -(t ln p + (1-t) ln(1-p)) with p = sigma(-f)
            if f >= 0.0 {
                t * f + (1.0 + (-f).exp()).ln()
            } else {
                (t - 1.0) * f + (1.0 + f.exp()).ln()
            }
        })
        .sum()
}

pub fn platt_fit(
    sub: &SubmissionSet,
    calibration_truth: &DatasetManifest,
) -> Result<PlattParams, EvalError> {
    platt_fit_pairs(&join_pairs(sub, calibration_truth)?)
}

/// Map every prediction through the fitted sigmoid.
pub fn platt_apply(sub: &SubmissionSet, params: PlattParams) -> SubmissionSet {
    let predictions: BTreeMap<String, f64> = sub
        .predictions
        .iter()
        .map(|(id, &s)| {
            let f = params.a * s + params.b;
            let p = if f >= 0.0 { (-f).exp() / (1.0 + (-f).exp()) } else { 1.0 / (1.0 + f.exp()) };
            (id.clone(), p.clamp(0.0, 1.0))
        })
        .collect();
    SubmissionSet { predictions, team: sub.team.clone(), timestamp: sub.timestamp.clone() }
}
