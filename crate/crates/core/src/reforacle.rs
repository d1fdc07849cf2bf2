//! Brute-force reference solver for tiny instances.
//!
//! The objective is non-decreasing in every allocation entry, so an optimum
//! sits on the face where all parties are fully matched. That face is
//! parameterized by its free coordinates:
//!
//! - 2×2 bipartite: `t = x_00` (one parameter);
//! - 3×3 bipartite: the top-left 2×2 block (four parameters);
//! - non-bipartite, 3 agents: weights of edges `{0,1}` and `{0,2}` on the simplex;
//! - non-bipartite, 4 agents: weights of two of the three perfect matchings.
//!
//! SPLC pairs receive their total greedily by slope. The scan starts on a
//! coarse grid and repeatedly zooms in on the incumbent until the step equals
//! the requested resolution.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Layout, MarketInstance};

pub const DEFAULT_RESOLUTION: f64 = 1e-5;

#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    /// Allocation in layout order.
    pub x: Vec<f64>,
    /// Per-pair totals.
    pub totals: Vec<Vec<f64>>,
    pub utilities: Vec<f64>,
    pub objective: f64,
    pub resolution: f64,
    /// `L_local · resolution`, with `L_local` bounding the objective's slope in
    /// parameter space at the returned point.
    pub error_bound: f64,
}

struct Problem<'a> {
    layout: &'a Layout,
    /// Slopes and lengths per chain, for the greedy fill.
    chains: Vec<Vec<(f64, f64, f64)>>,
}

impl Problem<'_> {
    /// Fill per-pair totals for a parameter vector; false outside the face.
    fn totals(&self, th: &[f64], t: &mut [Vec<f64>]) -> bool {
        let n = self.layout.n;
        match (self.layout.kind.is_bipartite(), n) {
            (true, 2) => {
                let a = th[0];
                t[0][0] = a;
                t[0][1] = 1.0 - a;
                t[1][0] = 1.0 - a;
                t[1][1] = a;
            }
            (true, 3) => {
                let (a, b, c, d) = (th[0], th[1], th[2], th[3]);
                t[0][0] = a;
                t[0][1] = b;
                t[1][0] = c;
                t[1][1] = d;
                t[0][2] = 1.0 - a - b;
                t[1][2] = 1.0 - c - d;
                t[2][0] = 1.0 - a - c;
                t[2][1] = 1.0 - b - d;
                t[2][2] = a + b + c + d - 1.0;
            }
            (false, 3) => {
                let (a, b) = (th[0], th[1]);
                set_edge(t, 0, 1, a);
                set_edge(t, 0, 2, b);
                set_edge(t, 1, 2, 1.0 - a - b);
            }
            (false, 4) => {
                let (a, b) = (th[0], th[1]);
                let c = 1.0 - a - b;
                set_edge(t, 0, 1, a);
                set_edge(t, 2, 3, a);
                set_edge(t, 0, 2, b);
                set_edge(t, 1, 3, b);
                set_edge(t, 0, 3, c);
                set_edge(t, 1, 2, c);
            }
            _ => unreachable!("size checked on entry"),
        }
        for v in t.iter_mut().flatten() {
            if *v < 0.0 {
                if *v < -1e-12 {
                    return false;
                }
                *v = 0.0;
            }
        }
        true
    }

    fn utilities(&self, t: &[Vec<f64>], u: &mut [f64]) {
        u.fill(0.0);
        for (chain, segs) in self.layout.chains.iter().zip(&self.chains) {
            let mut left = t[chain.agent][chain.good];
            let partner = self.layout.partner_party(&self.layout.coords[chain.range.start]);
            for &(slope, partner_slope, len) in segs {
                if left <= 0.0 {
                    break;
                }
                let take = left.min(len);
                left -= take;
                u[chain.agent] += slope * take;
                if let Some(p) = partner {
                    u[p] += partner_slope * take;
                }
            }
        }
    }

    fn objective(&self, th: &[f64], t: &mut [Vec<f64>], u: &mut [f64]) -> f64 {
        if !self.totals(th, t) {
            return f64::NEG_INFINITY;
        }
        self.utilities(t, u);
        let mut s = 0.0;
        for (ui, ci) in u.iter().zip(&self.layout.disagreement) {
            let d = ui - ci;
            if !(d > 0.0) {
                return f64::NEG_INFINITY;
            }
            s += d.ln();
        }
        s
    }
}

fn set_edge(t: &mut [Vec<f64>], a: usize, b: usize, v: f64) {
    t[a][b] = v;
    t[b][a] = v;
}

/// Grid points covering `[lo, hi]` with spacing `h`, anchored at `center`, including both ends.
fn axis(center: f64, lo: f64, hi: f64, h: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    let k_lo = ((lo - center) / h).ceil() as i64;
    let k_hi = ((hi - center) / h).floor() as i64;
    for k in k_lo..=k_hi {
        let v = center + k as f64 * h;
        if v > lo && v < hi {
            pts.push(v);
        }
    }
    if center >= lo && center <= hi {
        pts.push(center);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Best point of the product grid; ties keep the first point in odometer order.
fn scan(p: &Problem, axes: &[Vec<f64>], t: &mut [Vec<f64>], u: &mut [f64]) -> (Vec<f64>, f64) {
    let d = axes.len();
    let mut idx = vec![0usize; d];
    let mut th: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let mut best = (th.clone(), f64::NEG_INFINITY);
    loop {
        let v = p.objective(&th, t, u);
        if v > best.1 {
            best = (th.clone(), v);
        }
        let mut k = 0;
        loop {
            if k == d {
                return best;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                th[k] = axes[k][idx[k]];
                break;
            }
            idx[k] = 0;
            th[k] = axes[k][0];
            k += 1;
        }
    }
}

/// Maximize the Nash objective over a tiny instance by exhaustive grid search.
///
/// Supports bipartite kinds with `n ≤ 3` and the non-bipartite kind with `3 ≤ n ≤ 4`.
pub fn grid_solve(inst: &MarketInstance, resolution: f64) -> Result<OracleResult> {
    if !(resolution > 0.0 && resolution < 1.0) {
        return Err(Error::InvalidParameter(format!("resolution must lie in (0, 1), got {resolution}")));
    }
    let n = inst.n;
    let dim = match (inst.kind.is_bipartite(), n) {
        (true, 2) => 1,
        (true, 3) => 4,
        (false, 3) | (false, 4) => 2,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "reference oracle handles bipartite n ≤ 3 and non-bipartite n ∈ {{3, 4}}, got {} with n = {n}",
                inst.kind
            )))
        }
    };
    let layout = inst.layout();
    let chains = layout
        .chains
        .iter()
        .map(|ch| layout.coords[ch.range.clone()].iter().map(|c| (c.agent_util, c.partner_util, c.cap)).collect())
        .collect();
    let p = Problem { layout: &layout, chains };
    let mut t = vec![vec![0.0; n]; n];
    let mut u = vec![0.0; layout.parties()];

    let coarse: f64 = match dim {
        1 => 1.0 / 256.0,
        2 => 1.0 / 64.0,
        _ => 1.0 / 16.0,
    };
    let mut h = coarse.max(resolution);
    let full: Vec<Vec<f64>> = (0..dim).map(|_| axis(0.0, 0.0, 1.0, h)).collect();
    let (mut best, mut best_val) = scan(&p, &full, &mut t, &mut u);
    if best_val == f64::NEG_INFINITY {
        return Err(Error::Infeasible("no grid point gives every party more than its disagreement utility".into()));
    }
    loop {
        let step = (h / 4.0).max(resolution);
        // Zoom at this step until the incumbent is interior to its window.
        for _ in 0..1000 {
            let axes: Vec<Vec<f64>> =
                best.iter().map(|&c| axis(c, (c - 3.0 * h).max(0.0), (c + 3.0 * h).min(1.0), step)).collect();
            let (cand, val) = scan(&p, &axes, &mut t, &mut u);
            let on_edge = cand
                .iter()
                .zip(&axes)
                .any(|(&v, a)| (v == a[0] && a[0] > 0.0) || (v == *a.last().expect("non-empty") && v < 1.0));
            let improved = val > best_val;
            if improved {
                best = cand;
                best_val = val;
            }
            if !(improved && on_edge) {
                break;
            }
        }
        h = step;
        if h <= resolution {
            break;
        }
    }

    p.totals(&best, &mut t);
    p.utilities(&t, &mut u);
    let mut x = vec![0.0; layout.len()];
    for (ch, segs) in layout.chains.iter().zip(&p.chains) {
        let mut left = t[ch.agent][ch.good];
        for (k, &(_, _, len)) in ch.range.clone().zip(segs) {
            let take = left.min(len).max(0.0);
            x[k] = take;
            left -= take;
        }
    }
    // Each parameter moves at most two entries of any party's row.
    let mut max_slope = vec![0.0f64; layout.parties()];
    for c in &layout.coords {
        max_slope[c.agent] = max_slope[c.agent].max(c.agent_util);
        if let Some(q) = layout.partner_party(c) {
            max_slope[q] = max_slope[q].max(c.partner_util);
        }
    }
    let l_local: f64 = (dim as f64).sqrt()
        * (0..layout.parties()).map(|q| 2.0 * max_slope[q] / (u[q] - layout.disagreement[q])).sum::<f64>();
    Ok(OracleResult { x, totals: t, utilities: u, objective: best_val, resolution, error_bound: l_local * resolution })
}
