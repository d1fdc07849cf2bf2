use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MarketInstance, ModelKind, Segment};
use crate::error::{Error, Result};

/// Random instance with i.i.d. uniform utilities, each party's largest entry rescaled to 1.
///
/// `sparsity` is the probability that an entry (or a whole SPLC pair) is zeroed.
/// Every party keeps at least one positive entry. Disagreement utilities are zero;
/// see [`with_endowments`].
pub fn gen_random(n: usize, kind: ModelKind, seed: u64, sparsity: f64) -> Result<MarketInstance> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n must be at least 2, got {n}")));
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidParameter(format!("sparsity must lie in [0, 1), got {sparsity}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        ModelKind::OneSidedLinear | ModelKind::NonBipartiteLinear => {
            let nb = kind == ModelKind::NonBipartiteLinear;
            let mut u = vec![vec![0.0; n]; n];
            for (i, row) in u.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    let draw: f64 = rng.random();
                    let keep = rng.random::<f64>() >= sparsity;
                    if keep && !(nb && i == j) {
                        *v = draw;
                    }
                }
                ensure_positive_row(row, &mut rng, nb.then_some(i));
                scale_to_unit_max(row);
            }
            Ok(if nb { MarketInstance::non_bipartite(u, None) } else { MarketInstance::one_sided_linear(u, None) })
        }
        ModelKind::OneSidedSplc | ModelKind::TwoSidedSplc => {
            let two = kind == ModelKind::TwoSidedSplc;
            let mut segs = vec![vec![Vec::new(); n]; n];
            let mut w = vec![vec![Vec::new(); n]; n];
            for i in 0..n {
                for j in 0..n {
                    let pieces = rng.random_range(1..=3usize);
                    let lengths = random_lengths(pieces, &mut rng);
                    let agent_on = rng.random::<f64>() >= sparsity;
                    let slopes = descending_draws(pieces, &mut rng);
                    segs[i][j] = lengths
                        .iter()
                        .zip(&slopes)
                        .map(|(&l, &s)| Segment::new(if agent_on { s } else { 0.0 }, l))
                        .collect();
                    if two {
                        let job_on = rng.random::<f64>() >= sparsity;
                        let draws = descending_draws(pieces, &mut rng);
                        w[i][j] = draws.into_iter().map(|v| if job_on { v } else { 0.0 }).collect();
                    }
                }
            }
            // Agents: rescale slopes; every agent needs a positive pair.
            for (i, row) in segs.iter_mut().enumerate() {
                if row.iter().all(|s| s[0].slope <= 0.0) {
                    let j = rng.random_range(0..n);
                    let top = 0.5 + 0.5 * rng.random::<f64>();
                    let k = row[j].len();
                    for (idx, seg) in row[j].iter_mut().enumerate() {
                        seg.slope = top * (k - idx) as f64 / k as f64;
                    }
                    debug_assert!(row[j][0].slope > 0.0, "agent {i}");
                }
                let m = row.iter().map(|s| s[0].slope).fold(0.0, f64::max);
                for seg in row.iter_mut().flatten() {
                    seg.slope /= m;
                }
            }
            if two {
                for j in 0..n {
                    if (0..n).all(|i| w[i][j][0] <= 0.0) {
                        let i = rng.random_range(0..n);
                        let top = 0.5 + 0.5 * rng.random::<f64>();
                        let k = w[i][j].len();
                        for (idx, v) in w[i][j].iter_mut().enumerate() {
                            *v = top * (k - idx) as f64 / k as f64;
                        }
                    }
                    let m = (0..n).map(|i| w[i][j][0]).fold(0.0, f64::max);
                    for i in 0..n {
                        for v in w[i][j].iter_mut() {
                            *v /= m;
                        }
                    }
                }
                Ok(MarketInstance::two_sided_splc(segs, w, None, None))
            } else {
                Ok(MarketInstance::one_sided_splc(segs, None))
            }
        }
    }
}

fn ensure_positive_row(row: &mut [f64], rng: &mut ChaCha8Rng, forbidden: Option<usize>) {
    if row.iter().any(|&v| v > 0.0) {
        return;
    }
    let n = row.len();
    let j = loop {
        let j = rng.random_range(0..n);
        if Some(j) != forbidden {
            break j;
        }
    };
    row[j] = 0.5 + 0.5 * rng.random::<f64>();
}

fn scale_to_unit_max(row: &mut [f64]) {
    let m = row.iter().copied().fold(0.0, f64::max);
    for v in row.iter_mut() {
        *v /= m;
    }
}

fn descending_draws(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.random()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Lengths from sorted uniform breakpoints on `[0, 1]`.
fn random_lengths(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random()).collect();
    cuts.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(k);
    let mut prev = 0.0;
    for c in cuts {
        out.push(c - prev);
        prev = c;
    }
    out.push(1.0 - prev);
    out
}

/// Copy of a bipartite instance whose disagreement utilities are what a random
/// perfect matching yields, divided by `1 + slack`.
///
/// The matching itself certifies a feasibility gap of at least `slack`.
pub fn with_endowments(inst: &MarketInstance, slack: f64, seed: u64) -> Result<MarketInstance> {
    if !inst.kind.is_bipartite() {
        return Err(Error::Unsupported { solver: "endowment generator", kind: inst.kind });
    }
    if !(slack > 0.0) || !slack.is_finite() {
        return Err(Error::InvalidParameter(format!("slack must be positive, got {slack}")));
    }
    let n = inst.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let layout = inst.layout();
    let mut x = vec![0.0; layout.len()];
    for (i, &j) in perm.iter().enumerate() {
        let chain = &layout.chains[layout.chain_index(i, j).expect("bipartite pair")];
        for k in chain.range.clone() {
            x[k] = layout.coords[k].cap;
        }
    }
    let u = layout.utilities(&x);
    let mut out = inst.clone();
    out.c = u[..n].iter().map(|v| v / (1.0 + slack)).collect();
    if inst.kind == ModelKind::TwoSidedSplc {
        out.d = u[n..].iter().map(|v| v / (1.0 + slack)).collect();
    }
    Ok(out)
}

/// One-sided linear instance where every agent ranks goods by a shared value
/// `b_j` perturbed by multiplicative noise: `u_ij = b_j (1 + noise · r_ij)`.
///
/// Optima of these markets are interior, unlike uniform random ones whose optimum
/// is usually a single matching.
pub fn gen_common_value(n: usize, seed: u64, noise: f64) -> Result<MarketInstance> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n must be at least 2, got {n}")));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::InvalidParameter(format!("noise must be non-negative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<f64> = (0..n).map(|_| 0.05 + 0.95 * rng.random::<f64>()).collect();
    let u = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = b.iter().map(|&bj| bj * (1.0 + noise * rng.random::<f64>())).collect();
            scale_to_unit_max(&mut row);
            row
        })
        .collect();
    Ok(MarketInstance::one_sided_linear(u, None))
}

/// Non-bipartite family on `2ℓ+1` agents whose optimum gives the last agent only `1/(ℓ+1)`.
///
/// Agents `0..ℓ` value only agent `2ℓ`; agents `ℓ..2ℓ` value every other agent;
/// agent `2ℓ` values agents `ℓ..2ℓ`. All positive entries are 1.
pub fn gen_tightness(l: usize) -> MarketInstance {
    assert!(l >= 1, "tightness family needs l >= 1");
    let n = 2 * l + 1;
    let last = 2 * l;
    let mut u = vec![vec![0.0; n]; n];
    for row in u.iter_mut().take(l) {
        row[last] = 1.0;
    }
    for (i, row) in u.iter_mut().enumerate().take(2 * l).skip(l) {
        for (j, v) in row.iter_mut().enumerate() {
            if j != i {
                *v = 1.0;
            }
        }
    }
    for v in u[last].iter_mut().take(2 * l).skip(l) {
        *v = 1.0;
    }
    MarketInstance::non_bipartite(u, None)
}
