//! Similarity space for submissions: each prediction vector is replaced by
//! its midranks, centered, and projected onto the top principal components.
//! Rank-transforming first makes the embedding invariant to any monotone
//! re-mapping of a submission's scores.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use super::{EvalError, SubmissionSet};

/// Midranks of a score vector (ties get their average 1-based rank).
pub fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Project rank-transformed submissions into a `dims`-dimensional space.
/// Returns one coordinate vector per submission, in input order.
pub fn rank_pca(subs: &[SubmissionSet], dims: usize) -> Result<Vec<Vec<f64>>, EvalError> {
    if subs.len() < 3 {
        return Err(EvalError::TooFewSubmissions(3));
    }
    if dims == 0 {
        return Err(EvalError::InvalidArgument("dims must be > 0".into()));
    }
    let items: BTreeSet<&String> = subs[0].predictions.keys().collect();
    for sub in &subs[1..] {
        if sub.predictions.keys().collect::<BTreeSet<_>>() != items {
            return Err(EvalError::ItemSetMismatch);
        }
    }
    let item_list: Vec<&String> = items.into_iter().collect();
    let n = subs.len();
    let d = item_list.len();
    let mut data = DMatrix::zeros(n, d);
    for (r, sub) in subs.iter().enumerate() {
        let scores: Vec<f64> = item_list.iter().map(|id| sub.predictions[*id]).collect();
        for (c, v) in midranks(&scores).into_iter().enumerate() {
            data[(r, c)] = v;
        }
    }
    // center columns (per-item mean rank across submissions)
    for c in 0..d {
        let mean = data.column(c).sum() / n as f64;
        for r in 0..n {
            data[(r, c)] -= mean;
        }
    }
    let svd = data.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let k = dims.min(svd.singular_values.len());
    let coords = (0..n)
        .map(|r| {
            (0..dims)
                .map(|j| if j < k { u[(r, j)] * svd.singular_values[j] } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::tests_support::sub_owned;

    fn sub(scores: &[f64]) -> SubmissionSet {
        sub_owned(
            &scores
                .iter()
                .enumerate()
                .map(|(i, &v)| (format!("i{i:02}"), v))
                .collect::<Vec<_>>(),
        )
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn duplicates_identical_coordinates() {
        let a = sub(&[0.1, 0.5, 0.9, 0.3]);
        let b = sub(&[0.9, 0.2, 0.4, 0.6]);
        let coords = rank_pca(&[a.clone(), a.clone(), b], 2).unwrap();
        assert!(dist(&coords[0], &coords[1]) < 1e-9);
    }

    #[test]
    fn monotone_remap_invariant() {
        let a = sub(&[0.1, 0.5, 0.9, 0.3]);
        let b = sub(&[0.9, 0.2, 0.4, 0.6]);
        let c = sub(&[0.5, 0.5, 0.1, 0.8]);
        let base = rank_pca(&[a.clone(), b.clone(), c.clone()], 2).unwrap();
        // remap a through x^3 (strictly increasing): ranks unchanged
        let a2 = sub(&[0.1f64.powi(3), 0.5f64.powi(3), 0.9f64.powi(3), 0.3f64.powi(3)]);
        let remapped = rank_pca(&[a2, b, c], 2).unwrap();
        for (p, q) in base.iter().zip(&remapped) {
            // PCA axes may flip sign; compare pairwise distances instead
            let _ = (p, q);
        }
        let d_base: Vec<f64> =
            vec![dist(&base[0], &base[1]), dist(&base[0], &base[2]), dist(&base[1], &base[2])];
        let d_re: Vec<f64> = vec![
            dist(&remapped[0], &remapped[1]),
            dist(&remapped[0], &remapped[2]),
            dist(&remapped[1], &remapped[2]),
        ];
        for (x, y) in d_base.iter().zip(&d_re) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_construction_equidistant() {
        // three submissions whose rank vectors form an equilateral set:
        // cyclic shifts of the same permutation pattern
        let a = sub(&[0.1, 0.2, 0.3]);
        let b = sub(&[0.3, 0.1, 0.2]);
        let c = sub(&[0.2, 0.3, 0.1]);
        let coords = rank_pca(&[a, b, c], 2).unwrap();
        let d01 = dist(&coords[0], &coords[1]);
        let d02 = dist(&coords[0], &coords[2]);
        let d12 = dist(&coords[1], &coords[2]);
        assert!((d01 - d02).abs() < 1e-9, "{d01} vs {d02}");
        assert!((d01 - d12).abs() < 1e-9, "{d01} vs {d12}");
    }

    #[test]
    fn too_few_submissions() {
        let a = sub(&[0.1, 0.2]);
        assert!(matches!(
            rank_pca(&[a.clone(), a], 2),
            Err(EvalError::TooFewSubmissions(3))
        ));
    }

    #[test]
    fn midrank_ties() {
        assert_eq!(midranks(&[0.5, 0.5, 0.9]), vec![1.5, 1.5, 3.0]);
    }
}
