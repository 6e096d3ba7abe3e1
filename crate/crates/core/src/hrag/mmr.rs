//! Maximal marginal relevance selection over cosine similarity.

use serde::{Deserialize, Serialize};

use super::RetrievalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmrParams {
    pub lambda: f64,
    pub k: usize,
    pub fetch_k: usize,
}

impl Default for MmrParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            k: 3,
            fetch_k: 10,
        }
    }
}

impl MmrParams {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(RetrievalError::InvalidParams(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.k == 0 || self.k > self.fetch_k {
            return Err(RetrievalError::InvalidParams(format!(
                "need 1 <= k <= fetch_k, got k={} fetch_k={}",
                self.k, self.fetch_k
            )));
        }
        Ok(())
    }
}

/// Score differences at or below this are ties.
pub const TIE_EPSILON: f64 = 1e-12;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Greedy MMR over precomputed scores, returning candidate indices in pick order.
///
/// The first pick is the most relevant candidate. Each later pick maximizes
/// `lambda * relevance - (1 - lambda) * max similarity to the picks so far`.
/// Ties, including scores that differ only by rounding noise, go to the
/// lowest candidate index.
pub fn mmr_order(relevance: &[f64], similarity: impl Fn(usize, usize) -> f64, lambda: f64, k: usize) -> Vec<usize> {
    let n = relevance.len();
    let mut picked: Vec<usize> = Vec::with_capacity(k.min(n));
    let mut taken = vec![false; n];
    // running max similarity of each candidate to the picked set
    let mut redundancy = vec![f64::NEG_INFINITY; n];
    while picked.len() < k.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let score = if picked.is_empty() {
                relevance[i]
            } else {
                lambda * relevance[i] - (1.0 - lambda) * redundancy[i]
            };
            if best.map_or(true, |(_, s)| score > s + TIE_EPSILON) {
                best = Some((i, score));
            }
        }
        let (choice, _) = best.expect("a remaining candidate exists");
        taken[choice] = true;
        picked.push(choice);
        for i in (0..n).filter(|&i| !taken[i]) {
            redundancy[i] = redundancy[i].max(similarity(i, choice));
        }
    }
    picked
}

/// MMR selection of `min(k, candidates)` ids by cosine similarity.
pub fn mmr_select<I: Clone>(
    query: &[f64],
    candidates: &[(I, Vec<f64>)],
    params: &MmrParams,
) -> Result<Vec<I>, RetrievalError> {
    if let Some((_, v)) = candidates.iter().find(|(_, v)| v.len() != query.len()) {
        return Err(RetrievalError::DimensionMismatch {
            expected: query.len(),
            found: v.len(),
        });
    }
    let relevance: Vec<f64> = candidates.iter().map(|(_, v)| cosine(query, v)).collect();
    let order = mmr_order(
        &relevance,
        |i, j| cosine(&candidates[i].1, &candidates[j].1),
        params.lambda,
        params.k,
    );
    Ok(order.into_iter().map(|i| candidates[i].0.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_one_is_relevance_ranking() {
        let order = mmr_order(&[0.9, 0.8, 0.7], |_, _| 0.99, 1.0, 2);
        assert_eq!(order, [0, 1]);
    }

    #[test]
    fn redundant_candidate_is_skipped() {
        // d1 scores .5*.8 - .5*.95 = -.075, d2 scores .5*.5 - .5*.1 = .2
        let sim = |i: usize, j: usize| match (i.min(j), i.max(j)) {
            (0, 1) => 0.95,
            (0, 2) => 0.1,
            (1, 2) => 0.3,
            _ => 1.0,
        };
        assert_eq!(mmr_order(&[0.9, 0.8, 0.5], sim, 0.5, 2), [0, 2]);
    }

    #[test]
    fn k_larger_than_pool_returns_all() {
        let q = vec![1.0, 0.0];
        let cands = vec![("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0]), ("c", vec![0.6, 0.8])];
        let params = MmrParams {
            lambda: 0.5,
            k: 5,
            fetch_k: 10,
        };
        let ids = mmr_select(&q, &cands, &params).unwrap();
        assert_eq!(ids.len(), 3);
        assert_eq!(ids[0], "a");
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(mmr_order(&[0.5, 0.5, 0.5], |_, _| 0.0, 0.5, 3), [0, 1, 2]);
        // lambda 0: first pick still by relevance, then pure diversity
        assert_eq!(mmr_order(&[0.1, 0.9, 0.2], |i, j| if i + j == 1 { 0.9 } else { 0.0 }, 0.0, 2), [1, 2]);
    }

    #[test]
    fn dimension_mismatch() {
        let err = mmr_select(&[1.0, 0.0], &[(0, vec![1.0])], &MmrParams::default()).unwrap_err();
        assert_eq!(err, RetrievalError::DimensionMismatch { expected: 2, found: 1 });
    }

    #[test]
    fn params_validation() {
        assert!(MmrParams::default().validate().is_ok());
        assert!(MmrParams { k: 0, ..Default::default() }.validate().is_err());
        assert!(MmrParams { k: 11, ..Default::default() }.validate().is_err());
        assert!(MmrParams { lambda: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn cosine_of_zero_vector_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-12);
    }
}
