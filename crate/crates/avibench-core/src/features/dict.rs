//! Two-layer unsupervised feature learning over mel spectrogram input:
//! PCA-whitened spectro-temporal patches clustered by spherical k-means,
//! encoded, temporally downsampled, and clustered again for the second
//! layer. Clips are summarized by rectified cosine responses, max- and
//! mean-pooled over time.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureFrames, FeatureKind};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictConfig {
    /// Patch width in frames; patch dim = width * n_mels.
    pub patch_width: usize,
    pub k1: usize,
    pub k2: usize,
    /// Non-overlapping block length for temporal downsampling between layers.
    pub pool_len: usize,
    pub max_iter: usize,
    /// Cap on patches sampled for layer-1 clustering.
    pub max_patches: usize,
    pub seed: u64,
}

impl Default for DictConfig {
    fn default() -> Self {
        Self {
            patch_width: 4,
            k1: 100,
            k2: 100,
            pool_len: 4,
            max_iter: 50,
            max_patches: 50_000,
            seed: 0,
        }
    }
}

/// Whitening transform learned from training patches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Whitening {
    pub mean: Vec<f64>,
    /// Square full-rank matrix, applied as `W * (x - mean)`.
    pub matrix: Vec<Vec<f64>>,
}

impl Whitening {
    pub fn apply(&self, patch: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = patch.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        self.matrix
            .iter()
            .map(|row| row.iter().zip(&centered).map(|(w, c)| w * c).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureDictionary {
    pub config: DictConfig,
    pub whitening: Whitening,
    /// `[k1][patch_dim]`, unit L2 rows.
    pub layer1_centroids: Vec<Vec<f64>>,
    /// `[k2][k1]`, unit L2 rows.
    pub layer2_centroids: Vec<Vec<f64>>,
    /// Per-iteration spherical k-means objectives, for monotonicity checks.
    pub layer1_objective: Vec<f64>,
    pub layer2_objective: Vec<f64>,
}

const NORM_EPS: f64 = 1e-12;

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = l2_norm(v);
    if n <= NORM_EPS {
        None
    } else {
        Some(v.iter().map(|x| x / n).collect())
    }
}

/// Spherical k-means: unit-norm centroids maximizing the summed cosine
/// similarity. Returns (centroids, per-iteration objective trace).
pub fn spherical_kmeans(
    points: &[Vec<f64>],
    k: usize,
    max_iter: usize,
    seed_val: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), FeatureError> {
    if k == 0 {
        return Err(FeatureError::InvalidConfig("k must be > 0".into()));
    }
    if points.len() < k {
        return Err(FeatureError::InsufficientData(format!(
            "{} points for k={k}",
            points.len()
        )));
    }
    let mut rng = seed::rng(seed_val);
    // k-means++-style seeding on cosine distance
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..points.len());
    centroids.push(points[first].clone());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| 1.0 - dot(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            rng.gen_range(0..points.len())
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[idx].clone());
        let c = centroids.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(1.0 - dot(p, c));
        }
    }

    let mut assignment = vec![usize::MAX; points.len()];
    let mut objective = Vec::new();
    for _ in 0..max_iter {
        // assignment step
        let mut changed = false;
        let mut obj = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let s = dot(p, c);
                if s > best_sim {
                    best_sim = s;
                    best = j;
                }
            }
            if assignment[i] != best {
                changed = true;
                assignment[i] = best;
            }
            obj += best_sim;
        }
        objective.push(obj);
        if !changed && objective.len() > 1 {
            break;
        }
        // update step: centroid = normalized mean of assigned points
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // reseed empty clusters from a deterministic draw
                let idx = rng.gen_range(0..points.len());
                centroids[j] = points[idx].clone();
            } else if let Some(c) = normalized(&sums[j]) {
                centroids[j] = c;
            }
        }
    }
    Ok((centroids, objective))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Extract width-`w` patches (concatenated consecutive frames) from one clip.
fn patches(frames: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    if frames.len() < width {
        return Vec::new();
    }
    (0..=frames.len() - width)
        .map(|i| frames[i..i + width].iter().flatten().copied().collect())
        .collect()
}

fn fit_whitening(patches: &[Vec<f64>]) -> Result<Whitening, FeatureError> {
    let n = patches.len();
    let dim = patches[0].len();
    let mut mean = vec![0.0; dim];
    for p in patches {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for p in patches {
        let c = DVector::from_iterator(dim, p.iter().zip(&mean).map(|(x, m)| x - m));
        cov += &c * c.transpose();
    }
    cov /= n as f64;
    let eig = cov.symmetric_eigen();
    const EIG_EPS: f64 = 1e-8;
    let scales: Vec<f64> = eig.eigenvalues.iter().map(|&l| 1.0 / (l.max(0.0) + EIG_EPS).sqrt()).collect();
    // W = E diag(1/sqrt(l+eps)) E^T
    let e = &eig.eigenvectors;
    let mut w = DMatrix::zeros(dim, dim);
    for (j, &s) in scales.iter().enumerate() {
        let col = e.column(j);
        w += s * &col * col.transpose();
    }
    let matrix = (0..dim).map(|i| w.row(i).iter().copied().collect()).collect();
    Ok(Whitening { mean, matrix })
}

/// Fit the two-layer dictionary on mel-spectrogram feature frames.
pub fn learn_dictionary(
    melspecs: &[FeatureFrames],
    config: &DictConfig,
) -> Result<FeatureDictionary, FeatureError> {
    if config.k1 == 0 || config.k2 == 0 {
        return Err(FeatureError::InvalidConfig("k1 and k2 must be > 0".into()));
    }
    if config.patch_width == 0 || config.pool_len == 0 {
        return Err(FeatureError::InvalidConfig("patch_width and pool_len must be > 0".into()));
    }
    let mut all: Vec<Vec<f64>> = Vec::new();
    for spec in melspecs {
        if spec.kind != FeatureKind::LogMel {
            return Err(FeatureError::WrongKind { expected: FeatureKind::LogMel, got: spec.kind });
        }
        all.extend(patches(&spec.vectors, config.patch_width));
    }
    if all.len() < config.k1 {
        return Err(FeatureError::InsufficientData(format!(
            "{} patches available, need at least k1={}",
            all.len(),
            config.k1
        )));
    }
    let mut rng = seed::rng(seed::derive_seed(config.seed, "dict-subsample"));
    all.shuffle(&mut rng);
    all.truncate(config.max_patches);

    let whitening = fit_whitening(&all)?;
    let unit: Vec<Vec<f64>> = all
        .iter()
        .filter_map(|p| normalized(&whitening.apply(p)))
        .collect();
    if unit.len() < config.k1 {
        return Err(FeatureError::InsufficientData("too few non-silent patches".into()));
    }
    let (layer1_centroids, layer1_objective) = spherical_kmeans(
        &unit,
        config.k1,
        config.max_iter,
        seed::derive_seed(config.seed, "dict-layer1"),
    )?;

    // layer-2 training points: pooled layer-1 responses of each clip
    let mut pooled_all = Vec::new();
    for spec in melspecs {
        let resp = layer1_responses(&spec.vectors, &whitening, &layer1_centroids, config.patch_width);
        pooled_all.extend(downsample(&resp, config.pool_len));
    }
    let unit2: Vec<Vec<f64>> = pooled_all.iter().filter_map(|p| normalized(p)).collect();
    if unit2.len() < config.k2 {
        return Err(FeatureError::InsufficientData(format!(
            "{} pooled responses for k2={}",
            unit2.len(),
            config.k2
        )));
    }
    let (layer2_centroids, layer2_objective) = spherical_kmeans(
        &unit2,
        config.k2,
        config.max_iter,
        seed::derive_seed(config.seed, "dict-layer2"),
    )?;

    Ok(FeatureDictionary {
        config: config.clone(),
        whitening,
        layer1_centroids,
        layer1_objective,
        layer2_centroids,
        layer2_objective,
    })
}

/// Rectified cosine responses of each patch position to the layer-1
/// centroids. Silent (zero-norm) patches respond with zeros.
fn layer1_responses(
    frames: &[Vec<f64>],
    whitening: &Whitening,
    centroids: &[Vec<f64>],
    width: usize,
) -> Vec<Vec<f64>> {
    patches(frames, width)
        .iter()
        .map(|p| {
            if l2_norm(p) <= NORM_EPS {
                return vec![0.0; centroids.len()];
            }
            match normalized(&whitening.apply(p)) {
                Some(u) => centroids.iter().map(|c| dot(c, &u).max(0.0)).collect(),
                None => vec![0.0; centroids.len()],
            }
        })
        .collect()
}

/// Mean over non-overlapping blocks of `pool_len` rows.
fn downsample(rows: &[Vec<f64>], pool_len: usize) -> Vec<Vec<f64>> {
    rows.chunks(pool_len)
        .map(|chunk| {
            let dim = chunk[0].len();
            let mut out = vec![0.0; dim];
            for r in chunk {
                for (o, x) in out.iter_mut().zip(r) {
                    *o += x;
                }
            }
            for o in out.iter_mut() {
                *o /= chunk.len() as f64;
            }
            out
        })
        .collect()
}

/// Encode a clip's mel spectrogram as one fixed-length summary vector:
/// `[max-pool L1 | mean-pool L1 | max-pool L2 | mean-pool L2]`.
pub fn encode_pool(
    melspec: &FeatureFrames,
    dict: &FeatureDictionary,
) -> Result<Vec<f64>, FeatureError> {
    if melspec.kind != FeatureKind::LogMel {
        return Err(FeatureError::WrongKind { expected: FeatureKind::LogMel, got: melspec.kind });
    }
    let expected_dim = dict.whitening.mean.len();
    let got = melspec.dim() * dict.config.patch_width;
    if got != expected_dim {
        return Err(FeatureError::DimMismatch(format!(
            "patch dim {got} vs dictionary dim {expected_dim}"
        )));
    }
    let l1 = layer1_responses(
        &melspec.vectors,
        &dict.whitening,
        &dict.layer1_centroids,
        dict.config.patch_width,
    );
    if l1.is_empty() {
        return Err(FeatureError::InsufficientData(
            "clip shorter than one patch".into(),
        ));
    }
    let pooled = downsample(&l1, dict.config.pool_len);
    let l2: Vec<Vec<f64>> = pooled
        .iter()
        .map(|p| match normalized(p) {
            Some(u) => dict.layer2_centroids.iter().map(|c| dot(c, &u).max(0.0)).collect(),
            None => vec![0.0; dict.layer2_centroids.len()],
        })
        .collect();
    let mut out = Vec::with_capacity(2 * dict.config.k1 + 2 * dict.config.k2);
    out.extend(pool_max(&l1));
    out.extend(pool_mean(&l1));
    out.extend(pool_max(&l2));
    out.extend(pool_mean(&l2));
    Ok(out)
}

/// Dimension of [`encode_pool`] output for a given config.
pub fn summary_dim(config: &DictConfig) -> usize {
    2 * config.k1 + 2 * config.k2
}

fn pool_max(rows: &[Vec<f64>]) -> Vec<f64> {
    let dim = rows[0].len();
    let mut out = vec![f64::NEG_INFINITY; dim];
    for r in rows {
        for (o, x) in out.iter_mut().zip(r) {
            *o = o.max(*x);
        }
    }
    out
}

fn pool_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let dim = rows[0].len();
    let mut out = vec![0.0; dim];
    for r in rows {
        for (o, x) in out.iter_mut().zip(r) {
            *o += x;
        }
    }
    for o in out.iter_mut() {
        *o /= rows.len() as f64;
    }
    out
}
