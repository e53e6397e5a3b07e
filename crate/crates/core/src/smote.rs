//! SMOTE oversampling over feature vectors: pick a minority seed, pick one of
//! its k nearest minority neighbors, and interpolate a synthetic point on the
//! segment between them. Repeats until the majority/minority ratio reaches
//! the target.
//!
//! Synthetic points are vector-only training instances; they have no text and
//! are not re-normalized after interpolation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CategoryId;
use crate::exec;
use crate::features::FeatureVector;
use crate::rng::derive_rng;
use rand::Rng;

#[derive(Debug, Error)]
pub enum SmoteError {
    #[error("neighbor pool of {pool} is smaller than k={k}")]
    PoolSmallerThanK { pool: usize, k: usize },
    #[error("dimension mismatch: seed has {seed}, neighbor has {neighbor}")]
    DimensionMismatch { seed: u32, neighbor: u32 },
    #[error("category {category}: minority pool of {pool} has no neighbors (need at least 2 minority instances)")]
    Infeasible { category: CategoryId, pool: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoteParams {
    /// Neighbor count. Clamped down (with a warning) when the minority pool
    /// is too small, as long as at least one neighbor exists.
    pub k: usize,
    /// Stop once majority/minority <= target_ratio.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteParams {
    fn default() -> Self {
        Self {
            k: 5,
            target_ratio: 1.0,
            seed: 0,
        }
    }
}

/// One synthetic instance with its provenance: `vector = seed + u * (neighbor - seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVector {
    pub vector: FeatureVector,
    pub seed_id: String,
    pub neighbor_id: String,
    /// Interpolation draw in [0, 1].
    pub u: f64,
}

/// Result of balancing one category.
#[derive(Debug, Clone)]
pub struct SmoteOutcome {
    pub synthetic: Vec<SyntheticVector>,
    pub final_ratio: f64,
    /// Set when k had to be clamped below the requested value.
    pub clamped_k: Option<usize>,
}

/// Indices of the k nearest pool vectors by euclidean distance, ascending;
/// ties broken by ascending index. `point` itself must not be in the pool.
pub fn nearest_neighbors(
    point: &FeatureVector,
    pool: &[FeatureVector],
    k: usize,
) -> Result<Vec<usize>, SmoteError> {
    if k == 0 {
        return Err(SmoteError::ZeroK);
    }
    if pool.len() < k {
        return Err(SmoteError::PoolSmallerThanK { pool: pool.len(), k });
    }
    let mut ranked: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, v)| (point.squared_distance(v), i))
        .collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Componentwise affine combination of two equal-dimension vectors.
pub fn interpolate(
    seed_vec: &FeatureVector,
    neighbor_vec: &FeatureVector,
    u: f64,
    seed_id: &str,
    neighbor_id: &str,
) -> Result<SyntheticVector, SmoteError> {
    if seed_vec.dim() != neighbor_vec.dim() {
        return Err(SmoteError::DimensionMismatch {
            seed: seed_vec.dim(),
            neighbor: neighbor_vec.dim(),
        });
    }
    let mut entries = Vec::with_capacity(seed_vec.nnz() + neighbor_vec.nnz());
    let (a, b) = (seed_vec.entries(), neighbor_vec.entries());
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() || j < b.len() {
        let (idx, s, n) = match (a.get(i), b.get(j)) {
            (Some(&(ia, wa)), Some(&(ib, wb))) if ia == ib => {
                i += 1;
                j += 1;
                (ia, wa, wb)
            }
            (Some(&(ia, wa)), Some(&(ib, _))) if ia < ib => {
                i += 1;
                (ia, wa, 0.0)
            }
            (Some(_), Some(&(ib, wb))) => {
                j += 1;
                (ib, 0.0, wb)
            }
            (Some(&(ia, wa)), None) => {
                i += 1;
                (ia, wa, 0.0)
            }
            (None, Some(&(ib, wb))) => {
                j += 1;
                (ib, 0.0, wb)
            }
            (None, None) => unreachable!(),
        };
        entries.push((idx, s + u * (n - s)));
    }
    let vector = FeatureVector::from_entries(seed_vec.dim(), entries).expect("indices in range");
    Ok(SyntheticVector {
        vector,
        seed_id: seed_id.to_string(),
        neighbor_id: neighbor_id.to_string(),
        u,
    })
}

/// Generate synthetic minority vectors for one category until
/// `n_majority / (n_minority + generated) <= target_ratio`.
///
/// `labels` marks the minority class with 1 relative to this category (the
/// caller maps its raw 0/1 labels onto minority membership). Neighbors are
/// searched within the original minority pool only. The RNG stream is
/// derived from `(params.seed, category)`, so per-category runs may execute
/// concurrently without changing outputs.
pub fn smote_balance(
    ids: &[String],
    vectors: &[FeatureVector],
    minority_mask: &[bool],
    category: CategoryId,
    params: &SmoteParams,
) -> Result<SmoteOutcome, SmoteError> {
    assert_eq!(ids.len(), vectors.len());
    assert_eq!(ids.len(), minority_mask.len());
    let minority_idx: Vec<usize> = (0..vectors.len()).filter(|&i| minority_mask[i]).collect();
    let n_minority = minority_idx.len();
    let n_majority = vectors.len() - n_minority;
    if n_minority < 2 {
        return Err(SmoteError::Infeasible {
            category,
            pool: n_minority,
        });
    }
    let mut k = params.k.max(1);
    let mut clamped_k = None;
    if k > n_minority - 1 {
        k = n_minority - 1;
        clamped_k = Some(k);
        log::warn!(
            "smote: category {category}: clamping k from {} to {k} (minority pool {n_minority})",
            params.k
        );
    }

    // Need the smallest t with n_majority / (n_minority + t) <= target_ratio.
    let needed = if n_minority as f64 * params.target_ratio >= n_majority as f64 {
        0
    } else {
        (n_majority as f64 / params.target_ratio).ceil() as usize - n_minority
    };

    // Neighbor lists over the original minority pool, excluding self.
    let pool: Vec<&FeatureVector> = minority_idx.iter().map(|&i| &vectors[i]).collect();
    let neighbor_lists: Vec<Vec<usize>> = exec::map_range(pool.len(), |p| {
        let mut ranked: Vec<(f64, usize)> = pool
            .iter()
            .enumerate()
            .filter(|&(q, _)| q != p)
            .map(|(q, v)| (pool[p].squared_distance(v), q))
            .collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        ranked.into_iter().take(k).map(|(_, q)| q).collect()
    });

    let mut rng = derive_rng(params.seed, &format!("smote/cat{category}"));
    let mut synthetic = Vec::with_capacity(needed);
    for _ in 0..needed {
        let p = rng.random_range(0..pool.len());
        let neighbors = &neighbor_lists[p];
        let q = neighbors[rng.random_range(0..neighbors.len())];
        let u: f64 = rng.random_range(0.0..=1.0);
        let seed_global = minority_idx[p];
        let neighbor_global = minority_idx[q];
        let sv = interpolate(
            &vectors[seed_global],
            &vectors[neighbor_global],
            u,
            &ids[seed_global],
            &ids[neighbor_global],
        )?;
        synthetic.push(sv);
    }
    let final_ratio = n_majority as f64 / (n_minority + synthetic.len()) as f64;
    Ok(SmoteOutcome {
        synthetic,
        final_ratio,
        clamped_k,
    })
}

/// Serialize synthetic vectors as JSONL audit records.
pub fn audit_jsonl(synthetic: &[SyntheticVector]) -> String {
    let mut out = String::new();
    for sv in synthetic {
        out.push_str(&serde_json::to_string(sv).expect("synthetic serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(dim: u32, values: &[f64]) -> FeatureVector {
        FeatureVector::from_entries(
            dim,
            values.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn neighbors_sorted_with_tie_rule() {
        let point = dense(2, &[0.0, 0.0]);
        let pool = vec![dense(2, &[1.0, 0.0]), dense(2, &[0.0, 3.0]), dense(2, &[2.0, 2.0])];
        let nn = nearest_neighbors(&point, &pool, 2).unwrap();
        assert_eq!(nn, vec![0, 2]); // distances 1, sqrt(8), 3
        let all = nearest_neighbors(&point, &pool, 3).unwrap();
        assert_eq!(all, vec![0, 2, 1]);
        // Equidistant neighbors: lower index first.
        let tie_pool = vec![dense(2, &[0.0, 1.0]), dense(2, &[1.0, 0.0])];
        let tie = nearest_neighbors(&point, &tie_pool, 2).unwrap();
        assert_eq!(tie, vec![0, 1]);
    }

    #[test]
    fn neighbors_pool_too_small() {
        let point = dense(1, &[0.0]);
        assert!(matches!(
            nearest_neighbors(&point, &[dense(1, &[1.0])], 2),
            Err(SmoteError::PoolSmallerThanK { .. })
        ));
    }

    #[test]
    fn interpolate_endpoints_and_midpoint() {
        let seed = dense(2, &[1.0, 2.0]);
        let nbr = dense(2, &[3.0, 6.0]);
        let mid = interpolate(&seed, &nbr, 0.5, "s", "n").unwrap();
        assert_eq!(mid.vector, dense(2, &[2.0, 4.0]));
        let at_seed = interpolate(&seed, &nbr, 0.0, "s", "n").unwrap();
        assert_eq!(at_seed.vector, seed);
        let at_nbr = interpolate(&seed, &nbr, 1.0, "s", "n").unwrap();
        assert_eq!(at_nbr.vector, nbr);
    }

    #[test]
    fn interpolate_dimension_mismatch() {
        let a = dense(2, &[1.0, 0.0]);
        let b = dense(3, &[1.0, 0.0, 0.0]);
        assert!(matches!(
            interpolate(&a, &b, 0.5, "a", "b"),
            Err(SmoteError::DimensionMismatch { .. })
        ));
    }

    fn balanced_fixture(n_major: usize, n_minor: usize) -> (Vec<String>, Vec<FeatureVector>, Vec<bool>) {
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        let mut mask = Vec::new();
        for i in 0..n_major {
            ids.push(format!("maj{i}"));
            vectors.push(dense(3, &[1.0 + (i % 7) as f64 * 0.01, 0.0, 0.0]));
            mask.push(false);
        }
        for i in 0..n_minor {
            ids.push(format!("min{i}"));
            vectors.push(dense(3, &[0.0, 1.0 + (i % 5) as f64 * 0.1, (i % 3) as f64 * 0.2]));
            mask.push(true);
        }
        (ids, vectors, mask)
    }

    #[test]
    fn balance_counts_match_reference() {
        let (ids, vectors, mask) = balanced_fixture(1409, 57);
        let params = SmoteParams { k: 5, target_ratio: 1.0, seed: 11 };
        let out = smote_balance(&ids, &vectors, &mask, 5, &params).unwrap();
        assert_eq!(out.synthetic.len(), 1352);
        assert!((out.final_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn already_balanced_generates_nothing() {
        let (ids, vectors, mask) = balanced_fixture(10, 10);
        let out = smote_balance(&ids, &vectors, &mask, 1, &SmoteParams::default()).unwrap();
        assert!(out.synthetic.is_empty());
    }

    #[test]
    fn single_minority_instance_is_infeasible() {
        let (ids, vectors, mask) = balanced_fixture(100, 1);
        assert!(matches!(
            smote_balance(&ids, &vectors, &mask, 9, &SmoteParams::default()),
            Err(SmoteError::Infeasible { .. })
        ));
    }

    #[test]
    fn small_pool_clamps_k() {
        let (ids, vectors, mask) = balanced_fixture(20, 3);
        let out = smote_balance(&ids, &vectors, &mask, 2, &SmoteParams { k: 5, target_ratio: 1.0, seed: 3 }).unwrap();
        assert_eq!(out.clamped_k, Some(2));
        assert_eq!(out.synthetic.len(), 17);
    }

    #[test]
    fn determinism_per_seed() {
        let (ids, vectors, mask) = balanced_fixture(40, 6);
        let params = SmoteParams { k: 3, target_ratio: 1.0, seed: 77 };
        let a = smote_balance(&ids, &vectors, &mask, 4, &params).unwrap();
        let b = smote_balance(&ids, &vectors, &mask, 4, &params).unwrap();
        assert_eq!(audit_jsonl(&a.synthetic), audit_jsonl(&b.synthetic));
        let c = smote_balance(&ids, &vectors, &mask, 4, &SmoteParams { seed: 78, ..params }).unwrap();
        assert_ne!(audit_jsonl(&a.synthetic), audit_jsonl(&c.synthetic));
    }

    #[test]
    fn synthetic_lies_on_segment_and_neighbor_is_valid() {
        let (ids, vectors, mask) = balanced_fixture(30, 8);
        let params = SmoteParams { k: 3, target_ratio: 1.0, seed: 5 };
        let out = smote_balance(&ids, &vectors, &mask, 7, &params).unwrap();
        let find = |id: &str| &vectors[ids.iter().position(|x| x == id).unwrap()];
        let minority_pool: Vec<&FeatureVector> = vectors
            .iter()
            .zip(&mask)
            .filter(|&(_, &m)| m)
            .map(|(v, _)| v)
            .collect();
        for sv in &out.synthetic {
            let seed = find(&sv.seed_id);
            let nbr = find(&sv.neighbor_id);
            for idx in 0..3u32 {
                let (s, n, v) = (seed.get(idx), nbr.get(idx), sv.vector.get(idx));
                assert!(v >= s.min(n) - 1e-12 && v <= s.max(n) + 1e-12);
            }
            // Neighbor must be among the k nearest of the seed in the pool.
            let seed_pos = minority_pool.iter().position(|v| *v == seed).unwrap();
            let others: Vec<FeatureVector> = minority_pool
                .iter()
                .enumerate()
                .filter(|&(q, _)| q != seed_pos)
                .map(|(_, v)| (*v).clone())
                .collect();
            let nn = nearest_neighbors(seed, &others, 3).unwrap();
            assert!(nn.iter().any(|&q| others[q] == *nbr));
        }
    }

    proptest! {
        #[test]
        fn segment_property_holds_for_random_u(u in 0.0f64..=1.0) {
            let seed = dense(4, &[0.2, 0.0, 0.9, 0.1]);
            let nbr = dense(4, &[0.0, 0.5, 0.3, 0.1]);
            let sv = interpolate(&seed, &nbr, u, "s", "n").unwrap();
            for idx in 0..4u32 {
                let (s, n, v) = (seed.get(idx), nbr.get(idx), sv.vector.get(idx));
                prop_assert!(v >= s.min(n) - 1e-12);
                prop_assert!(v <= s.max(n) + 1e-12);
            }
        }
    }
}
