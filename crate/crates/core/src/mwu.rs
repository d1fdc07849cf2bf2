//! Primal-dual multiplicative weights for one-sided markets with linear or
//! SPLC utilities.
//!
//! Every constraint of the feasibility program carries a weight: a price per
//! good, a price offset per agent, and (for segments shorter than a whole
//! unit) a segment dual. Each round the weights are rescaled into prices,
//! every agent buys its best bang-per-buck bundle, and each weight grows in
//! proportion to how much its constraint is loaded. The σ-weighted average of
//! the bundles is the approximate solution.
//!
//! Segment constraints are weighted in the normalized form `x/l ≤ 1`, so a
//! segment dual `h` adds `h/l` to the price of a unit of that segment.
//! Segments of length 1 are implied by the agent budget and get no dual, which
//! makes single-segment SPLC runs identical to linear ones.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{feasibility_gap, Layout, MarketInstance, ModelKind};

/// Weights above this are renormalized to keep the potential finite.
const RENORM_AT: f64 = 1e150;

/// Prices `p` (goods), offsets `q` (agents) and segment duals `h` (layout coordinates).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Dual of `x/l ≤ 1` per coordinate; zero where the segment carries no dual.
    pub h: Vec<f64>,
}

impl DualState {
    /// The all-ones starting weights.
    pub fn ones(layout: &Layout) -> Self {
        let binding = binding_segments(layout);
        DualState {
            p: vec![1.0; layout.n],
            q: vec![1.0; layout.n],
            h: binding.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Price of one unit of coordinate `k`: `p_j + q_i + h_k / l_k`.
    pub fn unit_price(&self, layout: &Layout, k: usize) -> f64 {
        let c = &layout.coords[k];
        let seg = if self.h[k] != 0.0 { self.h[k] / c.cap } else { 0.0 };
        self.p[c.good] + self.q[c.agent] + seg
    }

    /// Dual of the constraint `x_k ≤ l_k` in unnormalized form (`h_k / l_k`).
    pub fn segment_prices(&self, layout: &Layout) -> Vec<f64> {
        self.h.iter().zip(&layout.coords).map(|(&h, c)| if h != 0.0 { h / c.cap } else { 0.0 }).collect()
    }

    fn total(&self) -> f64 {
        self.p.iter().sum::<f64>() + self.q.iter().sum::<f64>() + self.h.iter().sum::<f64>()
    }
}

/// Segments shorter than a full unit; only these carry a dual.
pub fn binding_segments(layout: &Layout) -> Vec<bool> {
    layout.coords.iter().map(|c| layout.kind.is_splc() && c.cap < 1.0).collect()
}

/// Best bang-per-buck coordinate of agent `i` and its price-to-utility ratio.
fn best_coord(layout: &Layout, agent_coords: &[usize], d: &DualState) -> (usize, f64) {
    let mut best = usize::MAX;
    let mut ratio = f64::INFINITY;
    for &k in agent_coords {
        let u = layout.coords[k].agent_util;
        if u <= 0.0 {
            continue;
        }
        let r = d.unit_price(layout, k).max(f64::MIN_POSITIVE) / u;
        if r < ratio {
            ratio = r;
            best = k;
        }
    }
    (best, ratio)
}

fn coords_by_agent(layout: &Layout) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); layout.n];
    for (k, c) in layout.coords.iter().enumerate() {
        out[c.agent].push(k);
    }
    out
}

/// Rescale weights so that `Σp + Σq + Σh = n + Σ_i c_i min_k price_k / u_k`.
///
/// The right side is homogeneous in the weights, so the factor is `n / λ` with
/// `λ = Σp + Σq + Σh − Σ_i c_i min_k price_k / u_k`. A non-positive `λ` means
/// no prices satisfy the identity and the instance is infeasible.
pub fn rescale(layout: &Layout, weights: &DualState) -> Result<DualState> {
    let by_agent = coords_by_agent(layout);
    let mut lambda = weights.total();
    for (i, coords) in by_agent.iter().enumerate() {
        let (best, ratio) = best_coord(layout, coords, weights);
        if best == usize::MAX {
            return Err(Error::DegenerateAgent(i));
        }
        lambda -= layout.disagreement[i] * ratio;
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Infeasible(format!("price rescaling factor λ = {lambda} is not positive")));
    }
    let s = layout.n as f64 / lambda;
    Ok(DualState {
        p: weights.p.iter().map(|v| v * s).collect(),
        q: weights.q.iter().map(|v| v * s).collect(),
        h: weights.h.iter().map(|v| v * s).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bundle {
    /// Layout coordinate bought.
    pub coord: usize,
    pub amount: f64,
    /// Budget `1 + c_i min_k price_k / u_k`.
    pub budget: f64,
    /// Utility of the bundle, `c_i + max_k u_k / price_k`.
    pub value: f64,
}

/// Utility-maximizing bundle of agent `i` at (rescaled) prices `d`.
///
/// The whole budget goes to the best bang-per-buck coordinate; ties go to the
/// lowest coordinate index, i.e. the lowest good and then the earliest segment.
pub fn best_bundle(layout: &Layout, i: usize, d: &DualState) -> Result<Bundle> {
    let coords: Vec<usize> = (0..layout.len()).filter(|&k| layout.coords[k].agent == i).collect();
    let (coord, ratio) = best_coord(layout, &coords, d);
    if coord == usize::MAX {
        return Err(Error::DegenerateAgent(i));
    }
    let ci = layout.disagreement[i];
    let budget = 1.0 + ci * ratio;
    let price = d.unit_price(layout, coord).max(f64::MIN_POSITIVE);
    Ok(Bundle { coord, amount: budget / price, budget, value: ci + 1.0 / ratio })
}

/// `CP_i` at prices `d`: the best utility agent `i` can buy with its budget.
pub fn cp_value(layout: &Layout, i: usize, d: &DualState) -> Result<f64> {
    best_bundle(layout, i, d).map(|b| b.value)
}

/// Default round count `⌈8 · 2n · ln(2n) / ε²⌉`.
pub fn default_iterations(n: usize, eps: f64) -> u64 {
    let m = 2.0 * n as f64;
    (8.0 * m * m.ln() / (eps * eps)).ceil() as u64
}

#[derive(Clone, Debug)]
pub struct MwuOptions {
    pub eps: f64,
    /// Overrides [`default_iterations`].
    pub iterations: Option<u64>,
}

impl MwuOptions {
    pub fn new(eps: f64) -> Self {
        MwuOptions { eps, iterations: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MwuTraceRow {
    pub t: u64,
    pub sigma: f64,
    /// `ln Φ` after this round's update.
    pub ln_phi: f64,
    /// `Σ_{s ≤ t} σ_s`.
    pub sigma_sum: f64,
    /// Largest `Σ_{s ≤ t} σ_s · load_s` over all constraints.
    pub max_weighted_load: f64,
    /// Overloads of the running average, `max(0, load − 1)`.
    pub max_row_overload: f64,
    pub max_col_overload: f64,
    /// Nash objective of the running average.
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MwuTrace {
    /// `ln Φ` of the starting weights: `ln(2n + number of segment duals)`.
    pub ln_phi0: f64,
    pub eps: f64,
    pub rows: Vec<MwuTraceRow>,
}

impl MwuTrace {
    /// Largest violation of the potential sandwich
    /// `ε(1−ε)·maxload ≤ ln Φ ≤ ln Φ₀ + ε Σσ` over all rounds, relative to the
    /// magnitude of the compared quantities. Non-positive when it holds.
    pub fn sandwich_violation(&self) -> f64 {
        let e = self.eps;
        let mut worst = f64::NEG_INFINITY;
        for r in &self.rows {
            let lower = e * (1.0 - e) * r.max_weighted_load;
            let upper = self.ln_phi0 + e * r.sigma_sum;
            let scale = upper.abs().max(r.ln_phi.abs()).max(1.0);
            worst = worst.max((lower - r.ln_phi) / scale).max((r.ln_phi - upper) / scale);
        }
        worst
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MwuSolution {
    /// σ-weighted average allocation, possibly overloaded.
    pub x_bar: Vec<f64>,
    /// Feasible allocation: `x_bar` divided by its worst load, then shifted.
    pub x: Vec<f64>,
    /// σ-weighted average prices.
    pub duals: DualState,
    /// `max(0, worst row/column load of x_bar − 1)`.
    pub overload: f64,
    pub iterations: u64,
    pub trace: MwuTrace,
}

/// Run MWU on a one-sided instance (linear or SPLC).
pub fn solve(inst: &MarketInstance, opts: &MwuOptions) -> Result<MwuSolution> {
    match inst.kind {
        ModelKind::OneSidedLinear | ModelKind::OneSidedSplc => {}
        kind => return Err(Error::Unsupported { solver: "mwu", kind }),
    }
    if !(opts.eps > 0.0 && opts.eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {}", opts.eps)));
    }
    if !inst.is_fisher() {
        feasibility_gap(inst)?;
    }
    let layout = inst.layout();
    run(&layout, opts.eps, opts.iterations.unwrap_or_else(|| default_iterations(inst.n, opts.eps)))
}

/// MWU for one-sided linear markets with disagreement utilities.
pub fn solve_liad(inst: &MarketInstance, opts: &MwuOptions) -> Result<MwuSolution> {
    if inst.kind != ModelKind::OneSidedLinear {
        return Err(Error::Unsupported { solver: "linear mwu", kind: inst.kind });
    }
    solve(inst, opts)
}

/// MWU for one-sided SPLC markets with disagreement utilities.
pub fn solve_sad(inst: &MarketInstance, opts: &MwuOptions) -> Result<MwuSolution> {
    if inst.kind != ModelKind::OneSidedSplc {
        return Err(Error::Unsupported { solver: "splc mwu", kind: inst.kind });
    }
    solve(inst, opts)
}

fn run(layout: &Layout, eps: f64, rounds: u64) -> Result<MwuSolution> {
    let n = layout.n;
    let m = layout.len();
    if rounds == 0 {
        return Err(Error::InvalidParameter("iteration count must be positive".into()));
    }
    let by_agent = coords_by_agent(layout);
    let binding = binding_segments(layout);
    let binding_idx: Vec<usize> = (0..m).filter(|&k| binding[k]).collect();
    let c = &layout.disagreement;

    let mut w = DualState::ones(layout);
    let ln_phi0 = w.total().ln();
    let mut log_offset = 0.0f64;

    let mut sigma_sum = 0.0;
    let mut x_sum = vec![0.0; m];
    let mut p_sum = vec![0.0; n];
    let mut q_sum = vec![0.0; n];
    let mut h_sum = vec![0.0; m];
    let mut cum_col = vec![0.0; n];
    let mut cum_row = vec![0.0; n];
    let mut cum_seg = vec![0.0; m];
    let mut cum_util = vec![0.0; n];
    let mut max_weighted = 0.0f64;
    let mut rows = Vec::with_capacity(rounds as usize);

    let mut best = vec![0usize; n];
    let mut amount = vec![0.0; n];
    let mut col = vec![0.0; n];

    for t in 1..=rounds {
        // Rescale.
        let mut lambda = w.total();
        let mut ratios = vec![0.0; n];
        for i in 0..n {
            let (k, r) = best_coord(layout, &by_agent[i], &w);
            if k == usize::MAX {
                return Err(Error::DegenerateAgent(i));
            }
            best[i] = k;
            ratios[i] = r;
            lambda -= c[i] * r;
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Infeasible(format!("price rescaling factor λ = {lambda} is not positive")));
        }
        let s = n as f64 / lambda;

        // Best bundles at the rescaled prices.
        col.fill(0.0);
        let mut max_load = 0.0f64;
        for i in 0..n {
            let k = best[i];
            let price = s * w.unit_price(layout, k).max(f64::MIN_POSITIVE);
            let budget = 1.0 + c[i] * s * ratios[i];
            amount[i] = budget / price;
            col[layout.coords[k].good] += amount[i];
            max_load = max_load.max(amount[i]);
            if binding[k] {
                max_load = max_load.max(amount[i] / layout.coords[k].cap);
            }
        }
        max_load = col.iter().copied().fold(max_load, f64::max);
        let sigma = if max_load > 0.0 { 1.0 / max_load } else { 1.0 };

        // Averages use this round's rescaled prices.
        sigma_sum += sigma;
        for j in 0..n {
            p_sum[j] += sigma * s * w.p[j];
            q_sum[j] += sigma * s * w.q[j];
        }
        for &k in &binding_idx {
            h_sum[k] += sigma * s * w.h[k];
        }
        for i in 0..n {
            let k = best[i];
            let a = amount[i];
            x_sum[k] += sigma * a;
            cum_row[i] += sigma * a;
            cum_util[i] += sigma * a * layout.coords[k].agent_util;
            max_weighted = max_weighted.max(cum_row[i]);
            if binding[k] {
                cum_seg[k] += sigma * a / layout.coords[k].cap;
                max_weighted = max_weighted.max(cum_seg[k]);
            }
        }
        for j in 0..n {
            cum_col[j] += sigma * col[j];
            max_weighted = max_weighted.max(cum_col[j]);
        }

        // Multiplicative updates.
        for j in 0..n {
            w.p[j] *= 1.0 + eps * sigma * col[j];
        }
        for i in 0..n {
            let k = best[i];
            w.q[i] *= 1.0 + eps * sigma * amount[i];
            if binding[k] {
                w.h[k] *= 1.0 + eps * sigma * amount[i] / layout.coords[k].cap;
            }
        }
        let mut total = w.total();
        if total > RENORM_AT {
            w.p.iter_mut().chain(w.q.iter_mut()).chain(w.h.iter_mut()).for_each(|v| *v /= total);
            log_offset += total.ln();
            total = w.total();
        }

        let max_row = cum_row.iter().copied().fold(0.0, f64::max) / sigma_sum;
        let max_col = cum_col.iter().copied().fold(0.0, f64::max) / sigma_sum;
        let objective = (0..n)
            .map(|i| {
                let slack = cum_util[i] / sigma_sum - c[i];
                if slack > 0.0 {
                    slack.ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum();
        rows.push(MwuTraceRow {
            t,
            sigma,
            ln_phi: total.ln() + log_offset,
            sigma_sum,
            max_weighted_load: max_weighted,
            max_row_overload: (max_row - 1.0).max(0.0),
            max_col_overload: (max_col - 1.0).max(0.0),
            objective,
        });
    }

    let x_bar: Vec<f64> = x_sum.iter().map(|v| v / sigma_sum).collect();
    let duals = DualState {
        p: p_sum.iter().map(|v| v / sigma_sum).collect(),
        q: q_sum.iter().map(|v| v / sigma_sum).collect(),
        h: h_sum.iter().map(|v| v / sigma_sum).collect(),
    };
    let worst = layout.agent_loads(&x_bar).into_iter().chain(layout.good_loads(&x_bar)).fold(0.0, f64::max);
    let overload = (worst - 1.0).max(0.0);
    let mut x: Vec<f64> = x_bar.iter().map(|v| v / worst.max(1.0)).collect();
    crate::oracles::shift_in_place(layout, &mut x);
    Ok(MwuSolution { x_bar, x, duals, overload, iterations: rounds, trace: MwuTrace { ln_phi0, eps, rows } })
}
