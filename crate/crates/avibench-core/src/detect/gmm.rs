//! Diagonal-covariance Gaussian mixture models fitted by EM, and the
//! MFCC+GMM baseline detector: one mixture per class, scored by the mean
//! per-frame log-likelihood difference squashed through a logistic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DetectError;
use crate::seed;

pub const COV_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gmm {
    pub components: Vec<GmmComponent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmFitConfig {
    pub n_components: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for GmmFitConfig {
    fn default() -> Self {
        Self { n_components: 8, max_iter: 100, tol: 1e-6, seed: 0 }
    }
}

/// Positive/negative class mixtures plus the logistic temperature used to
/// squash the likelihood difference into a score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmPair {
    pub positive: Gmm,
    pub negative: Gmm,
    pub temperature: f64,
}

fn log_sum_exp(vals: &[f64]) -> f64 {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Gmm {
    /// Log density of one frame under the mixture.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let per: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.max(1e-300).ln() + log_pdf_diag(x, &c.mean, &c.var))
            .collect();
        log_sum_exp(&per)
    }

    /// Fit by EM with k-means++-style mean seeding. Returns the model and
    /// the per-iteration log-likelihood trace (monotone non-decreasing).
    pub fn fit(frames: &[Vec<f64>], cfg: &GmmFitConfig) -> Result<(Self, Vec<f64>), DetectError> {
        let k = cfg.n_components;
        if k == 0 {
            return Err(DetectError::InvalidConfig("n_components must be > 0".into()));
        }
        if frames.len() < k {
            return Err(DetectError::InsufficientData(format!(
                "{} frames for {k} components",
                frames.len()
            )));
        }
        let dim = frames[0].len();
        if frames.iter().any(|f| f.len() != dim) {
            return Err(DetectError::DimMismatch("ragged frames".into()));
        }

        // pooled variance; doubles as the degenerate-class fallback
        let n = frames.len() as f64;
        let mut gmean = vec![0.0; dim];
        for f in frames {
            for (m, x) in gmean.iter_mut().zip(f) {
                *m += x;
            }
        }
        for m in gmean.iter_mut() {
            *m /= n;
        }
        let mut gvar = vec![0.0; dim];
        for f in frames {
            for ((v, x), m) in gvar.iter_mut().zip(f).zip(&gmean) {
                let d = x - m;
                *v += d * d;
            }
        }
        for v in gvar.iter_mut() {
            *v = (*v / n).max(COV_FLOOR);
        }
        let degenerate = gvar.iter().all(|&v| v <= COV_FLOOR);
        if degenerate || k == 1 {
            let g = Gmm {
                components: vec![GmmComponent { weight: 1.0, mean: gmean, var: gvar }],
            };
            let ll = frames.iter().map(|f| g.log_pdf(f)).sum::<f64>() / n;
            return Ok((g, vec![ll]));
        }

        // k-means++ seeding of means
        let mut rng = seed::rng(cfg.seed);
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(k);
        means.push(frames[rng.gen_range(0..frames.len())].clone());
        let mut d2: Vec<f64> = frames.iter().map(|f| sq_dist(f, &means[0])).collect();
        while means.len() < k {
            let total: f64 = d2.iter().sum();
            let idx = if total <= 0.0 {
                rng.gen_range(0..frames.len())
            } else {
                let mut t = rng.gen::<f64>() * total;
                let mut chosen = frames.len() - 1;
                for (i, &d) in d2.iter().enumerate() {
                    t -= d;
                    if t <= 0.0 {
                        chosen = i;
                        break;
                    }
                }
                chosen
            };
            means.push(frames[idx].clone());
            for (i, f) in frames.iter().enumerate() {
                d2[i] = d2[i].min(sq_dist(f, means.last().unwrap()));
            }
        }
        let mut comps: Vec<GmmComponent> = means
            .into_iter()
            .map(|mean| GmmComponent { weight: 1.0 / k as f64, mean, var: gvar.clone() })
            .collect();

        let mut trace = Vec::new();
        let mut prev_ll = f64::NEG_INFINITY;
        let mut resp = vec![vec![0.0f64; k]; frames.len()];
        for _ in 0..cfg.max_iter {
            // E step
            let mut ll = 0.0;
            for (f, r) in frames.iter().zip(resp.iter_mut()) {
                for (j, c) in comps.iter().enumerate() {
                    r[j] = c.weight.max(1e-300).ln() + log_pdf_diag(f, &c.mean, &c.var);
                }
                let lse = log_sum_exp(r);
                ll += lse;
                for v in r.iter_mut() {
                    *v = (*v - lse).exp();
                }
            }
            ll /= n;
            trace.push(ll);
            if (ll - prev_ll).abs() < cfg.tol {
                break;
            }
            prev_ll = ll;
            // M step
            for (j, c) in comps.iter_mut().enumerate() {
                let nj: f64 = resp.iter().map(|r| r[j]).sum();
                if nj < 1e-10 {
                    continue; // starved component keeps its parameters
                }
                c.weight = nj / n;
                let mut mean = vec![0.0; dim];
                for (f, r) in frames.iter().zip(&resp) {
                    for (m, x) in mean.iter_mut().zip(f) {
                        *m += r[j] * x;
                    }
                }
                for m in mean.iter_mut() {
                    *m /= nj;
                }
                let mut var = vec![0.0; dim];
                for (f, r) in frames.iter().zip(&resp) {
                    for ((v, x), m) in var.iter_mut().zip(f).zip(&mean) {
                        let d = x - m;
                        *v += r[j] * d * d;
                    }
                }
                for v in var.iter_mut() {
                    *v = (*v / nj).max(COV_FLOOR);
                }
                c.mean = mean;
                c.var = var;
            }
            let wsum: f64 = comps.iter().map(|c| c.weight).sum();
            for c in comps.iter_mut() {
                c.weight /= wsum;
            }
        }
        Ok((Gmm { components: comps }, trace))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn log_pdf_diag(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(var) {
        let d = xi - mi;
        acc += -0.5 * ((2.0 * std::f64::consts::PI * vi).ln() + d * d / vi);
    }
    acc
}

impl GmmPair {
    pub fn fit(
        positive_frames: &[Vec<f64>],
        negative_frames: &[Vec<f64>],
        cfg: &GmmFitConfig,
        temperature: f64,
    ) -> Result<Self, DetectError> {
        if temperature <= 0.0 {
            return Err(DetectError::InvalidConfig("temperature must be > 0".into()));
        }
        let (positive, _) = Gmm::fit(positive_frames, &GmmFitConfig {
            seed: seed::derive_seed(cfg.seed, "gmm-pos"),
            ..cfg.clone()
        })?;
        let (negative, _) = Gmm::fit(negative_frames, &GmmFitConfig {
            seed: seed::derive_seed(cfg.seed, "gmm-neg"),
            ..cfg.clone()
        })?;
        Ok(Self { positive, negative, temperature })
    }

    /// Score a clip's frames: logistic of the mean per-frame log-likelihood
    /// difference, in `[0, 1]`.
    pub fn score(&self, clip_frames: &[Vec<f64>]) -> Result<f64, DetectError> {
        if clip_frames.is_empty() {
            return Err(DetectError::InsufficientData("empty frame set".into()));
        }
        let n = clip_frames.len() as f64;
        let diff: f64 = clip_frames
            .iter()
            .map(|f| self.positive.log_pdf(f) - self.negative.log_pdf(f))
            .sum::<f64>()
            / n;
        Ok(logistic(diff / self.temperature))
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
