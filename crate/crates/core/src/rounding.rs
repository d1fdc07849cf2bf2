//! Lottery rounding: write a bipartite fractional matching as a convex
//! combination of perfect matchings and sample from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Layout;

/// Row/column sums may exceed 1 by this much.
pub const OVERLOAD_TOL: f64 = 1e-9;
/// Entries at or below this are treated as zero during extraction.
const ZERO_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotteryTerm {
    pub weight: f64,
    /// `matching[i]` is the good assigned to agent `i`.
    pub matching: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LotteryDecomposition {
    pub terms: Vec<LotteryTerm>,
}

impl LotteryDecomposition {
    /// `Σ_m λ_m M_m` as a dense matrix.
    pub fn reconstruct(&self, n: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; n]; n];
        for t in &self.terms {
            for (i, &j) in t.matching.iter().enumerate() {
                out[i][j] += t.weight;
            }
        }
        out
    }

    /// Expected utility of each agent under the lottery.
    pub fn expected_utilities(&self, u: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for t in &self.terms {
            for (i, &j) in t.matching.iter().enumerate() {
                out[i] += t.weight * u[i][j];
            }
        }
        out
    }
}

fn check_matrix(x: &[Vec<f64>]) -> Result<usize> {
    let n = x.len();
    if n == 0 {
        return Err(Error::MalformedMatrix("empty matrix".into()));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != n {
            return Err(Error::MalformedMatrix(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::MalformedMatrix(format!("entry ({i}, {j}) = {v} is negative or not finite")));
            }
        }
        let s: f64 = row.iter().sum();
        if s > 1.0 + OVERLOAD_TOL {
            return Err(Error::MalformedMatrix(format!("row {i} sums to {s}")));
        }
    }
    for j in 0..n {
        let s: f64 = x.iter().map(|r| r[j]).sum();
        if s > 1.0 + OVERLOAD_TOL {
            return Err(Error::MalformedMatrix(format!("column {j} sums to {s}")));
        }
    }
    Ok(n)
}

/// Fill row and column slack of a sub-doubly-stochastic matrix in northwest-corner order.
pub fn complete_slack(x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = check_matrix(x)?;
    let mut y = x.to_vec();
    let mut row: Vec<f64> = y.iter().map(|r| (1.0 - r.iter().sum::<f64>()).max(0.0)).collect();
    let mut col: Vec<f64> = (0..n).map(|j| (1.0 - y.iter().map(|r| r[j]).sum::<f64>()).max(0.0)).collect();
    let (mut i, mut j) = (0, 0);
    while i < n && j < n {
        let a = row[i].min(col[j]);
        y[i][j] += a;
        row[i] -= a;
        col[j] -= a;
        if row[i] <= col[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(y)
}

/// Kuhn's augmenting-path matching restricted to entries `≥ threshold`.
fn perfect_matching(y: &[Vec<f64>], threshold: f64) -> Option<Vec<usize>> {
    let n = y.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    fn augment(i: usize, y: &[Vec<f64>], t: f64, seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for j in 0..y.len() {
            if y[i][j] >= t && !seen[j] {
                seen[j] = true;
                if owner[j].is_none_or(|k| augment(k, y, t, seen, owner)) {
                    owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    for i in 0..n {
        let mut seen = vec![false; n];
        if !augment(i, y, threshold, &mut seen, &mut owner) {
            return None;
        }
    }
    let mut m = vec![0; n];
    for (j, o) in owner.iter().enumerate() {
        m[o.expect("perfect")] = j;
    }
    Some(m)
}

/// Perfect matching on the support whose smallest entry is largest.
fn bottleneck_matching(y: &[Vec<f64>]) -> Option<Vec<usize>> {
    let mut values: Vec<f64> = y.iter().flatten().copied().filter(|&v| v > ZERO_TOL).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut best = perfect_matching(y, *values.first()?)?;
    let (mut lo, mut hi) = (0, values.len());
    // Invariant: a matching exists at values[lo]; none at values[hi] (if in range).
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        match perfect_matching(y, values[mid]) {
            Some(m) => {
                best = m;
                lo = mid;
            }
            None => hi = mid,
        }
    }
    Some(best)
}

/// Decompose a sub-doubly-stochastic matrix (completed first) into perfect matchings.
pub fn bvn_decompose(x: &[Vec<f64>]) -> Result<LotteryDecomposition> {
    let mut y = complete_slack(x)?;
    let mut terms = Vec::new();
    while let Some(m) = bottleneck_matching(&y) {
        let w = m.iter().enumerate().map(|(i, &j)| y[i][j]).fold(f64::INFINITY, f64::min);
        for (i, &j) in m.iter().enumerate() {
            y[i][j] -= w;
            if y[i][j] <= ZERO_TOL {
                y[i][j] = 0.0;
            }
        }
        terms.push(LotteryTerm { weight: w, matching: m });
    }
    let total: f64 = terms.iter().map(|t| t.weight).sum();
    if terms.is_empty() || (total - 1.0).abs() > 1e-9 {
        return Err(Error::MalformedMatrix(format!("decomposition weights sum to {total}")));
    }
    for t in &mut terms {
        t.weight /= total;
    }
    Ok(LotteryDecomposition { terms })
}

/// Decompose an allocation of a bipartite layout; SPLC segments are summed per pair.
pub fn bvn_from_allocation(layout: &Layout, x: &[f64]) -> Result<LotteryDecomposition> {
    if !layout.kind.is_bipartite() {
        return Err(Error::Unsupported { solver: "lottery rounding", kind: layout.kind });
    }
    let mut totals = layout.totals(x);
    for v in totals.iter_mut().flatten() {
        if *v < 0.0 && *v >= -OVERLOAD_TOL {
            *v = 0.0;
        }
    }
    bvn_decompose(&totals)
}

/// Draw one matching with probability equal to its weight.
pub fn sample_matching(dec: &LotteryDecomposition, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for t in &dec.terms {
        acc += t.weight;
        if r < acc {
            return t.matching.clone();
        }
    }
    dec.terms.last().expect("non-empty decomposition").matching.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_err(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn half_uniform_two_by_two() {
        let x = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let d = bvn_decompose(&x).unwrap();
        assert_eq!(d.terms.len(), 2);
        let mut ms: Vec<_> = d.terms.iter().map(|t| (t.matching.clone(), t.weight)).collect();
        ms.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(ms, vec![(vec![0, 1], 0.5), (vec![1, 0], 0.5)]);
    }

    #[test]
    fn permutation_is_single_term() {
        let x = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        let d = bvn_decompose(&x).unwrap();
        assert_eq!(d.terms, vec![LotteryTerm { weight: 1.0, matching: vec![1, 2, 0] }]);
    }

    #[test]
    fn slack_is_packed() {
        let x = vec![vec![0.5, 0.0], vec![0.0, 0.0]];
        let y = complete_slack(&x).unwrap();
        for i in 0..2 {
            assert!((y[i].iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!((y[0][i] + y[1][i] - 1.0).abs() < 1e-15);
        }
        let d = bvn_decompose(&x).unwrap();
        assert!(max_err(&d.reconstruct(2), &y) <= 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(bvn_decompose(&[vec![-0.1, 0.0], vec![0.0, 0.0]]).is_err());
        assert!(bvn_decompose(&[vec![0.7, 0.7], vec![0.0, 0.0]]).is_err());
        assert!(bvn_decompose(&[vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn random_doubly_stochastic_seed_5() {
        // Convex combination of random permutations.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let mut x = vec![vec![0.0; n]; n];
        let k = 6;
        let weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        for w in weights {
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
            for (i, &j) in perm.iter().enumerate() {
                x[i][j] += w / total;
            }
        }
        let d = bvn_decompose(&x).unwrap();
        assert!(max_err(&d.reconstruct(n), &complete_slack(&x).unwrap()) <= 1e-9);
        assert!(d.terms.len() <= 10);
    }

    #[test]
    fn sampling_is_deterministic_and_follows_weights() {
        let d = bvn_decompose(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(sample_matching(&d, 3), sample_matching(&d, 3));
        let first = d.terms[0].matching.clone();
        let hits = (0..100_000u64).filter(|&s| sample_matching(&d, s) == first).count() as f64;
        // 3σ for a fair coin over 10⁵ draws is about 474.
        assert!((hits - 50_000.0).abs() <= 474.0, "{hits}");
    }

    #[test]
    fn single_term_always_sampled() {
        let d = bvn_decompose(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        for s in 0..20 {
            assert_eq!(sample_matching(&d, s), vec![0, 1]);
        }
    }

    #[test]
    fn json_shape() {
        let d = bvn_decompose(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(serde_json::to_string(&d).unwrap(), r#"[{"weight":1.0,"matching":[0,1]}]"#);
    }
}
