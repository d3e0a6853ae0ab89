//! Random forest over clip summary vectors: bootstrap-resampled trees with
//! Gini-gain axis-aligned splits. Each tree draws its own sub-seed from the
//! forest seed, so results are identical regardless of how the per-tree work
//! is scheduled.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DetectError;
use crate::seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features examined per split; 0 means `sqrt(dim)`.
    pub mtry: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: 25, mtry: 0, min_leaf: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf { pos_fraction: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { pos_fraction } => return *pos_fraction,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub config: ForestConfig,
    pub dim: usize,
}

impl RandomForest {
    pub fn fit(
        vectors: &[Vec<f64>],
        labels: &[bool],
        cfg: &ForestConfig,
    ) -> Result<Self, DetectError> {
        if vectors.len() != labels.len() {
            return Err(DetectError::DimMismatch(format!(
                "{} vectors vs {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        if vectors.is_empty() {
            return Err(DetectError::InsufficientData("no training vectors".into()));
        }
        let dim = vectors[0].len();
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(DetectError::DimMismatch("ragged vectors".into()));
        }
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            return Err(DetectError::SingleClass);
        }
        if cfg.n_trees == 0 {
            return Err(DetectError::InvalidConfig("n_trees must be > 0".into()));
        }
        let mtry = if cfg.mtry == 0 {
            ((dim as f64).sqrt().round() as usize).clamp(1, dim)
        } else {
            cfg.mtry.min(dim)
        };
        let trees: Vec<DecisionTree> = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let tree_seed = seed::derive_seed_indexed(cfg.seed, "rf-tree", t as u64);
                grow_tree(vectors, labels, cfg, mtry, tree_seed)
            })
            .collect();
        Ok(Self { trees, config: cfg.clone(), dim })
    }

    /// Mean over trees of the reached leaf's positive fraction.
    pub fn score(&self, x: &[f64]) -> Result<f64, DetectError> {
        if x.len() != self.dim {
            return Err(DetectError::DimMismatch(format!(
                "vector dim {} vs model dim {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self.trees.iter().map(|t| t.score(x)).sum::<f64>() / self.trees.len() as f64)
    }
}

fn grow_tree(
    vectors: &[Vec<f64>],
    labels: &[bool],
    cfg: &ForestConfig,
    mtry: usize,
    tree_seed: u64,
) -> DecisionTree {
    let n = vectors.len();
    let mut rng = seed::rng(tree_seed);
    let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut nodes = Vec::new();
    split_node(vectors, labels, sample, cfg, mtry, 0, &mut rng, &mut nodes);
    DecisionTree { nodes }
}

fn pos_fraction(labels: &[bool], idx: &[usize]) -> f64 {
    idx.iter().filter(|&&i| labels[i]).count() as f64 / idx.len() as f64
}

fn gini(p: f64) -> f64 {
    2.0 * p * (1.0 - p)
}

#[allow(clippy::too_many_arguments)]
fn split_node(
    vectors: &[Vec<f64>],
    labels: &[bool],
    idx: Vec<usize>,
    cfg: &ForestConfig,
    mtry: usize,
    depth: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let p = pos_fraction(labels, &idx);
    let node_id = nodes.len();
    if depth >= cfg.max_depth || idx.len() < 2 * cfg.min_leaf.max(1) || p == 0.0 || p == 1.0 {
        nodes.push(TreeNode::Leaf { pos_fraction: p });
        return node_id;
    }
    let dim = vectors[0].len();
    // sample mtry distinct features
    let mut feats: Vec<usize> = (0..dim).collect();
    for i in 0..mtry.min(dim) {
        let j = rng.gen_range(i..dim);
        feats.swap(i, j);
    }
    feats.truncate(mtry);

    let parent_impurity = gini(p) * idx.len() as f64;
    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    let mut vals: Vec<(f64, bool)> = Vec::with_capacity(idx.len());
    for &f in &feats {
        vals.clear();
        vals.extend(idx.iter().map(|&i| (vectors[i][f], labels[i])));
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total_pos = vals.iter().filter(|v| v.1).count() as f64;
        let n_tot = vals.len() as f64;
        let mut left_pos = 0.0;
        for i in 0..vals.len() - 1 {
            if vals[i].1 {
                left_pos += 1.0;
            }
            if vals[i].0 == vals[i + 1].0 {
                continue;
            }
            let n_l = (i + 1) as f64;
            let n_r = n_tot - n_l;
            if (n_l as usize) < cfg.min_leaf || (n_r as usize) < cfg.min_leaf {
                continue;
            }
            let p_l = left_pos / n_l;
            let p_r = (total_pos - left_pos) / n_r;
            let child_impurity = gini(p_l) * n_l + gini(p_r) * n_r;
            let gain = parent_impurity - child_impurity;
            let thr = 0.5 * (vals[i].0 + vals[i + 1].0);
            let better = match best {
                None => gain > 1e-12,
                Some((g, bf, bt)) => {
                    gain > g + 1e-12
                        || ((gain - g).abs() <= 1e-12 && (f < bf || (f == bf && thr < bt)))
                }
            };
            if better {
                best = Some((gain, f, thr));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        nodes.push(TreeNode::Leaf { pos_fraction: p });
        return node_id;
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        idx.into_iter().partition(|&i| vectors[i][feature] <= threshold);
    nodes.push(TreeNode::Leaf { pos_fraction: p }); // placeholder
    let left = split_node(vectors, labels, left_idx, cfg, mtry, depth + 1, rng, nodes);
    let right = split_node(vectors, labels, right_idx, cfg, mtry, depth + 1, rng, nodes);
    nodes[node_id] = TreeNode::Split { feature, threshold, left, right };
    node_id
}
