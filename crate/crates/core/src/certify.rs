//! Post-hoc checks for a computed allocation: Nash objective, KKT residuals,
//! approximate feasibility, proportionality margins and best-response gains.
//!
//! Every residual is stored as a violation, clamped at zero when the condition
//! holds. Non-finite values serialize as `null`.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::instance::{feasibility_gap, normalize, Layout, MarketInstance, ModelKind, DELTA_MAX};
use crate::mwu::{cp_value, DualState};

/// Coordinates above this count as part of the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-7;
/// A row, column or segment with less slack than this counts as full.
const FULL_THRESHOLD: f64 = 1e-6;

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn finite_or_null_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&x.is_finite().then_some(*x))?;
    }
    seq.end()
}

/// `Σ_p log(u_p(x) − c_p)` over all parties, or `-∞` when some party is at or
/// below its disagreement utility.
pub fn nash_objective(inst: &MarketInstance, x: &[f64]) -> f64 {
    let layout = inst.layout();
    objective_from_utilities(&layout.utilities(x), &layout.disagreement)
}

fn objective_from_utilities(u: &[f64], c: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (ui, ci) in u.iter().zip(c) {
        let s = ui - ci;
        if !(s > 0.0) {
            return f64::NEG_INFINITY;
        }
        sum += s.ln();
    }
    sum
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// Worst `row sum − 1` (vertex degree − 1 for the non-bipartite kind), at least 0.
    pub max_row_overload: f64,
    pub max_col_overload: f64,
    /// Worst `x_ijk − l_ijk`, at least 0.
    pub max_segment_overload: f64,
    /// Magnitude of the most negative entry.
    pub max_negative: f64,
    pub overload: f64,
    pub eps: f64,
    pub passed: bool,
}

/// Worst additive violation of the allocation constraints; passes iff it is at most `eps`.
pub fn approx_feasibility(layout: &Layout, x: &[f64], eps: f64) -> FeasibilityReport {
    let over = |loads: Vec<f64>| loads.into_iter().map(|v| v - 1.0).fold(0.0, f64::max);
    let max_row_overload = over(layout.agent_loads(x));
    let max_col_overload = over(layout.good_loads(x));
    let max_segment_overload = layout.coords.iter().zip(x).map(|(c, &v)| v - c.cap).fold(0.0, f64::max);
    let max_negative = x.iter().map(|&v| -v).fold(0.0, f64::max) + 0.0;
    let overload = max_row_overload.max(max_col_overload).max(max_segment_overload).max(max_negative);
    FeasibilityReport {
        max_row_overload,
        max_col_overload,
        max_segment_overload,
        max_negative,
        overload,
        eps,
        passed: overload <= eps + 1e-12,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KktResiduals {
    /// Worst `u_k/(u_i − c_i) [+ w_k/(w_j − d_j)] − (p_j + q_i + h_k)` over all coordinates.
    #[serde(serialize_with = "finite_or_null")]
    pub stationarity: f64,
    /// Per agent: worst gap in that equality over its support.
    #[serde(serialize_with = "finite_or_null_vec")]
    pub complementarity: Vec<f64>,
    /// Worst product of a dual with the slack of its constraint.
    pub dual_slackness: f64,
    /// Magnitude of the most negative dual.
    pub dual_sign: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.complementarity
            .iter()
            .copied()
            .fold(self.stationarity.max(self.dual_slackness).max(self.dual_sign), f64::max)
    }
}

/// Per-coordinate right-hand side of the stationarity condition.
fn stationarity_targets(layout: &Layout, u: &[f64]) -> Vec<f64> {
    let c = &layout.disagreement;
    layout
        .coords
        .iter()
        .map(|co| {
            let mut g = 0.0;
            if co.agent_util > 0.0 {
                g += co.agent_util / (u[co.agent] - c[co.agent]).max(0.0);
            }
            if let Some(p) = layout.partner_party(co) {
                if co.partner_util > 0.0 {
                    g += co.partner_util / (u[p] - c[p]).max(0.0);
                }
            }
            g
        })
        .collect()
}

fn bipartite_only(layout: &Layout, what: &'static str) -> Result<()> {
    if layout.kind.is_bipartite() {
        Ok(())
    } else {
        Err(Error::Unsupported { solver: what, kind: layout.kind })
    }
}

/// KKT residuals of `x` against prices `duals` (bipartite kinds only; the
/// non-bipartite kind is certified by its Frank-Wolfe gap).
pub fn kkt_residual(layout: &Layout, x: &[f64], duals: &DualState) -> Result<KktResiduals> {
    bipartite_only(layout, "kkt check")?;
    let n = layout.n;
    let u = layout.utilities(x);
    let g = stationarity_targets(layout, &u);
    let h = duals.segment_prices(layout);
    let mut stationarity = 0.0f64;
    let mut complementarity = vec![0.0f64; n];
    let mut dual_slackness = 0.0f64;
    for (k, co) in layout.coords.iter().enumerate() {
        let price = duals.p[co.good] + duals.q[co.agent] + h[k];
        stationarity = stationarity.max(g[k] - price);
        if x[k] > SUPPORT_THRESHOLD {
            let r = (price - g[k]).abs();
            complementarity[co.agent] = complementarity[co.agent].max(if r.is_nan() { f64::INFINITY } else { r });
        }
        dual_slackness = dual_slackness.max(h[k] * (co.cap - x[k]).max(0.0));
    }
    let rows = layout.agent_loads(x);
    let cols = layout.good_loads(x);
    for i in 0..n {
        dual_slackness = dual_slackness.max(duals.q[i] * (1.0 - rows[i]).max(0.0));
        dual_slackness = dual_slackness.max(duals.p[i] * (1.0 - cols[i]).max(0.0));
    }
    let dual_sign = duals.p.iter().chain(&duals.q).chain(&duals.h).map(|&v| -v).fold(0.0, f64::max) + 0.0;
    Ok(KktResiduals { stationarity: stationarity.max(0.0), complementarity, dual_slackness, dual_sign })
}

/// Fit prices to a dual-free allocation.
///
/// Solves a small LP for `p, q ≥ 0` and per-unit segment prices `h ≥ 0` that
/// minimize the largest stationarity and complementarity violation. Goods and
/// agents with slack are pinned to price 0, and only saturated segments may
/// carry `h`, so dual slackness holds by construction.
pub fn fit_duals(layout: &Layout, x: &[f64]) -> Result<DualState> {
    bipartite_only(layout, "dual fitting")?;
    let u = layout.utilities(x);
    let g = stationarity_targets(layout, &u);
    let rows = layout.agent_loads(x);
    let cols = layout.good_loads(x);
    let splc = layout.kind.is_splc();

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let bound = |full: bool| if full { (0.0, f64::INFINITY) } else { (0.0, 0.0) };
    let p: Vec<_> = cols.iter().map(|&l| lp.add_var(0.0, bound(l >= 1.0 - FULL_THRESHOLD))).collect();
    let q: Vec<_> = rows.iter().map(|&l| lp.add_var(0.0, bound(l >= 1.0 - FULL_THRESHOLD))).collect();
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    let h: Vec<_> = layout
        .coords
        .iter()
        .enumerate()
        .map(|(k, co)| (splc && x[k] >= co.cap - FULL_THRESHOLD).then(|| lp.add_var(0.0, (0.0, f64::INFINITY))))
        .collect();
    for (k, co) in layout.coords.iter().enumerate() {
        if !g[k].is_finite() {
            continue;
        }
        let mut price = vec![(p[co.good], 1.0), (q[co.agent], 1.0)];
        price.extend(h[k].map(|v| (v, 1.0)));
        let mut expr = price.clone();
        expr.push((t, 1.0));
        lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, g[k]);
        if x[k] > SUPPORT_THRESHOLD {
            price.push((t, -1.0));
            lp.add_constraint(price.as_slice(), ComparisonOp::Le, g[k]);
        }
    }
    let sol = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;
    let h = layout.coords.iter().zip(&h).map(|(co, v)| v.map_or(0.0, |v| sol[v].max(0.0) * co.cap)).collect();
    Ok(DualState {
        p: p.iter().map(|&v| sol[v].max(0.0)).collect(),
        q: q.iter().map(|&v| sol[v].max(0.0)).collect(),
        h,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProportionalityReport {
    /// Lower bound on `u_p − c_p` per party, in units where each party's largest utility is 1.
    pub bounds: Vec<f64>,
    /// `u_p − c_p − bound` per party, same units.
    pub margins: Vec<f64>,
    pub min_margin: f64,
}

impl ProportionalityReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.min_margin >= -tol
    }
}

/// Whether the model's guarantee is the endowment one, `1/(2n²(1+1/δ)κ)`.
fn uses_endowment_bound(inst: &MarketInstance) -> bool {
    match inst.kind {
        ModelKind::TwoSidedSplc => true,
        ModelKind::OneSidedLinear | ModelKind::OneSidedSplc => !inst.is_fisher(),
        ModelKind::NonBipartiteLinear => false,
    }
}

/// Per-party margin above the equal-share guarantee of the model.
///
/// `delta` is the feasibility gap and is required for instances with
/// disagreement utilities (two-sided instances without them use the largest gap).
pub fn proportionality_check(inst: &MarketInstance, x: &[f64], delta: Option<f64>) -> Result<ProportionalityReport> {
    if inst.kind == ModelKind::NonBipartiteLinear && !inst.is_fisher() {
        return Err(Error::Unsupported { solver: "proportionality check with disagreement", kind: inst.kind });
    }
    let (norm, info) = normalize(inst)?;
    let layout = norm.layout();
    let u = layout.utilities(x);
    let n = inst.n as f64;
    let bounds: Vec<f64> = if uses_endowment_bound(&norm) {
        let delta = match delta {
            Some(d) => d,
            None if norm.is_fisher() => DELTA_MAX,
            None => {
                return Err(Error::InvalidParameter(
                    "delta is required for instances with disagreement utilities".into(),
                ))
            }
        };
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        let b = 1.0 / (2.0 * n * n * (1.0 + 1.0 / delta) * info.kappa);
        vec![b; layout.parties()]
    } else {
        let mut mass = vec![0.0; layout.parties()];
        for co in &layout.coords {
            mass[co.agent] += co.agent_util * co.cap;
            if let Some(p) = layout.partner_party(co) {
                mass[p] += co.partner_util * co.cap;
            }
        }
        let factor = if inst.kind == ModelKind::NonBipartiteLinear { 2.0 * n * n } else { 2.0 * n };
        mass.iter().map(|m| m / factor).collect()
    };
    let margins: Vec<f64> = (0..layout.parties()).map(|p| u[p] - layout.disagreement[p] - bounds[p]).collect();
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ProportionalityReport { bounds, margins, min_margin })
}

/// Per party: how much utility it gains by replacing its own share with the
/// best share that fits in the capacity others leave free, at least 0.
pub fn best_response_gains(layout: &Layout, x: &[f64]) -> Vec<f64> {
    let n = layout.n;
    let nb = layout.kind == ModelKind::NonBipartiteLinear;
    // Loads indexed by capacity owner: agents, then goods (bipartite only).
    let mut loads = layout.agent_loads(x);
    loads.extend(layout.good_loads(x));
    let owner_of_good = |g: usize| if nb { g } else { n + g };
    let u = layout.utilities(x);
    let chain_total = |agent: usize, good: usize| -> f64 {
        layout.chain_index(agent, good).map(|c| x[layout.chains[c].range.clone()].iter().sum()).unwrap_or(0.0)
    };

    let deviators = match layout.kind {
        ModelKind::OneSidedLinear | ModelKind::OneSidedSplc => n,
        _ => layout.parties(),
    };
    (0..deviators)
        .map(|party| {
            // (value, segment cap, counterpart, pair mass already held by the deviator)
            let mut options: Vec<(f64, f64, usize, f64)> = Vec::new();
            for co in &layout.coords {
                if co.agent == party {
                    let o = owner_of_good(co.good);
                    options.push((co.agent_util, co.cap, o, chain_total(co.agent, co.good)));
                } else if layout.partner_party(co) == Some(party) {
                    options.push((co.partner_util, co.cap, co.agent, chain_total(co.agent, co.good)));
                }
            }
            options.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut residual: Vec<Option<f64>> = vec![None; loads.len()];
            let mut budget = 1.0f64;
            let mut best = 0.0;
            for (value, cap, o, held) in options {
                if value <= 0.0 || budget <= 0.0 {
                    break;
                }
                let r = residual[o].get_or_insert_with(|| (1.0 - (loads[o] - held)).max(0.0));
                let take = cap.min(*r).min(budget);
                *r -= take;
                budget -= take;
                best += value * take;
            }
            (best - u[party]).max(0.0)
        })
        .collect()
}

/// Per agent: `max(0, CP_i(p, q, h) − u_i(x))`, the gain from the best bundle
/// affordable at the given prices (one-sided kinds only).
pub fn price_response_gains(layout: &Layout, x: &[f64], duals: &DualState) -> Result<Vec<f64>> {
    match layout.kind {
        ModelKind::OneSidedLinear | ModelKind::OneSidedSplc => {}
        kind => return Err(Error::Unsupported { solver: "price response", kind }),
    }
    let u = layout.utilities(x);
    (0..layout.n).map(|i| Ok((cp_value(layout, i, duals)? - u[i]).max(0.0))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualSource {
    Solver,
    Fitted,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestResponse {
    /// Largest gain from a feasible unilateral reallocation.
    pub feasible_deviation: f64,
    /// Largest gain from the budget-constrained bundle at the solver's prices.
    pub price_based: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    #[serde(serialize_with = "finite_or_null")]
    pub objective: f64,
    pub utilities: Vec<f64>,
    pub feasibility: FeasibilityReport,
    pub dual_source: DualSource,
    pub kkt: Option<KktResiduals>,
    pub proportionality: Option<ProportionalityReport>,
    pub best_response: BestResponse,
    pub fw_gap: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    /// Additive overload the allocation may carry.
    pub eps: f64,
    /// Feasibility gap; computed when needed and absent.
    pub delta: Option<f64>,
    pub fw_gap: Option<f64>,
}

/// Run every check that applies to the instance's kind.
///
/// Solver prices are used when given; bipartite allocations without them get
/// fitted prices for the KKT check.
pub fn certify(
    inst: &MarketInstance,
    x: &[f64],
    duals: Option<&DualState>,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    let layout = inst.layout();
    if x.len() != layout.len() {
        return Err(Error::InvalidParameter(format!(
            "allocation has {} entries, instance layout has {}",
            x.len(),
            layout.len()
        )));
    }
    let utilities = layout.utilities(x);
    let objective = objective_from_utilities(&utilities, &layout.disagreement);
    let feasibility = approx_feasibility(&layout, x, opts.eps);

    let (dual_source, kkt) = if !layout.kind.is_bipartite() {
        (DualSource::None, None)
    } else if let Some(d) = duals {
        (DualSource::Solver, Some(kkt_residual(&layout, x, d)?))
    } else {
        let fitted = fit_duals(&layout, x)?;
        (DualSource::Fitted, Some(kkt_residual(&layout, x, &fitted)?))
    };

    let proportionality = if inst.kind == ModelKind::NonBipartiteLinear && !inst.is_fisher() {
        None
    } else {
        let delta = match opts.delta {
            Some(d) => Some(d),
            None if uses_endowment_bound(inst) && !inst.is_fisher() => Some(feasibility_gap(inst)?.delta),
            None => None,
        };
        Some(proportionality_check(inst, x, delta)?)
    };

    let feasible_deviation = best_response_gains(&layout, x).into_iter().fold(0.0, f64::max);
    let price_based = match duals {
        Some(d) if matches!(layout.kind, ModelKind::OneSidedLinear | ModelKind::OneSidedSplc) => {
            Some(price_response_gains(&layout, x, d)?.into_iter().fold(0.0, f64::max))
        }
        _ => None,
    };

    Ok(Certificate {
        objective,
        utilities,
        feasibility,
        dual_source,
        kkt,
        proportionality,
        best_response: BestResponse { feasible_deviation, price_based },
        fw_gap: opts.fw_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_tightness, Segment};

    fn identity(n: usize) -> MarketInstance {
        let u = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        MarketInstance::one_sided_linear(u, None)
    }

    fn flat(m: &[Vec<f64>]) -> Vec<f64> {
        m.iter().flatten().copied().collect()
    }

    #[test]
    fn objective_examples() {
        let inst = identity(3);
        let x = flat(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(nash_objective(&inst, &x), 0.0);
        assert_eq!(nash_objective(&inst, &vec![0.0; 9]), f64::NEG_INFINITY);
        let uniform = MarketInstance::one_sided_linear(vec![vec![1.0; 2]; 2], None);
        assert_eq!(nash_objective(&uniform, &[0.5; 4]), 0.0);
    }

    #[test]
    fn objective_sentinel_serializes_as_null() {
        let inst = identity(2);
        let cert = certify(&inst, &[0.0; 4], None, &CertifyOptions { eps: 0.0, delta: None, fw_gap: None }).unwrap();
        let v = serde_json::to_value(&cert).unwrap();
        assert!(v["objective"].is_null());
    }

    #[test]
    fn feasibility_examples() {
        let layout = identity(3).layout();
        let x = flat(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let r = approx_feasibility(&layout, &x, 0.0);
        assert_eq!(r.overload, 0.0);
        assert!(r.passed);
        let scaled: Vec<f64> = x.iter().map(|v| v * 1.1).collect();
        let r = approx_feasibility(&layout, &scaled, 0.1);
        assert!((r.overload - 0.1).abs() < 1e-15);
        assert!(r.passed);
        assert!(!approx_feasibility(&layout, &scaled, 0.05).passed);
    }

    #[test]
    fn kkt_zero_allocation_violates_stationarity() {
        let layout = identity(2).layout();
        let zero = DualState { p: vec![0.0; 2], q: vec![0.0; 2], h: vec![0.0; 4] };
        let r = kkt_residual(&layout, &[0.0; 4], &zero).unwrap();
        assert!(r.stationarity > 0.0);
    }

    #[test]
    fn fitted_duals_certify_symmetric_optimum() {
        // Optimum of this market is the identity with p + q = 1 on the diagonal.
        let inst = MarketInstance::one_sided_linear(vec![vec![1.0, 0.5], vec![0.5, 1.0]], None);
        let layout = inst.layout();
        let x = [1.0, 0.0, 0.0, 1.0];
        let d = fit_duals(&layout, &x).unwrap();
        let r = kkt_residual(&layout, &x, &d).unwrap();
        assert!(r.max() <= 1e-9, "{r:?} {d:?}");
        assert!(d.p.iter().chain(&d.q).all(|&v| v >= 0.0));
    }

    #[test]
    fn fitted_duals_on_interior_optimum() {
        // Identical agents: the even split is optimal and every entry is in the support.
        let inst = MarketInstance::one_sided_linear(vec![vec![1.0, 0.5], vec![1.0, 0.5]], None);
        let layout = inst.layout();
        let x = [0.5, 0.5, 0.5, 0.5];
        let d = fit_duals(&layout, &x).unwrap();
        let r = kkt_residual(&layout, &x, &d).unwrap();
        assert!(r.max() <= 1e-9, "{r:?} {d:?}");
    }

    #[test]
    fn splc_saturated_segment_gets_dual() {
        let segs = vec![vec![vec![Segment::new(1.0, 0.5), Segment::new(0.5, 0.5)]]];
        let inst = MarketInstance::one_sided_splc(segs, None);
        let layout = inst.layout();
        let x = [0.5, 0.5];
        let d = fit_duals(&layout, &x).unwrap();
        let r = kkt_residual(&layout, &x, &d).unwrap();
        assert!(r.max() <= 1e-9, "{r:?} {d:?}");
        assert!(d.segment_prices(&layout)[0] > 0.0);
    }

    #[test]
    fn proportionality_examples() {
        let inst = identity(3);
        let x = flat(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let r = proportionality_check(&inst, &x, None).unwrap();
        for m in &r.margins {
            assert!((m - (1.0 - 1.0 / 6.0)).abs() < 1e-15);
        }
        let uniform = MarketInstance::one_sided_linear(vec![vec![1.0; 4]; 4], None);
        let r = proportionality_check(&uniform, &[0.25; 16], None).unwrap();
        assert!(r.margins.iter().all(|m| (m - 0.5).abs() < 1e-15));
    }

    #[test]
    fn proportionality_needs_delta_with_endowments() {
        let inst = MarketInstance::one_sided_linear(vec![vec![1.0, 0.0], vec![0.0, 1.0]], Some(vec![0.5, 0.5]));
        let x = [1.0, 0.0, 0.0, 1.0];
        assert!(proportionality_check(&inst, &x, None).is_err());
        let r = proportionality_check(&inst, &x, Some(1.0)).unwrap();
        // κ = 1, bound 1/(2·4·2).
        assert!((r.bounds[0] - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn tightness_margin_is_small_but_non_negative() {
        let l = 2;
        let inst = gen_tightness(l);
        let layout = inst.layout();
        // Only agent 2l's edges matter for its margin: it keeps 1/(l+1) from the
        // edges to agents l..2l.
        let n = inst.n;
        let mut m = vec![vec![0.0; n]; n];
        let last = 2 * l;
        let share = 1.0 / (l as f64 + 1.0);
        for i in 0..l {
            m[i][last] = share;
        }
        for i in l..2 * l {
            m[i][last] = share / l as f64;
        }
        let mut x = vec![0.0; layout.len()];
        for (k, co) in layout.coords.iter().enumerate() {
            x[k] = m[co.agent][co.good];
        }
        let r = proportionality_check(&inst, &x, None).unwrap();
        let expect = share - (l as f64) / (2.0 * (n * n) as f64);
        assert!((r.margins[last] - expect).abs() < 1e-12, "{:?}", r.margins);
    }

    #[test]
    fn best_response_from_nothing() {
        let inst = MarketInstance::one_sided_linear(vec![vec![0.3, 0.9], vec![0.7, 0.2]], None);
        let g = best_response_gains(&inst.layout(), &[0.0; 4]);
        assert_eq!(g, vec![0.9, 0.7]);
    }

    #[test]
    fn best_response_respects_residual_capacity() {
        let inst = MarketInstance::one_sided_linear(vec![vec![1.0, 0.5], vec![1.0, 0.5]], None);
        // Agent 1 holds all of good 0; agent 0 can only take good 1.
        let g = best_response_gains(&inst.layout(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn best_response_non_bipartite_counts_both_endpoints() {
        let inst =
            MarketInstance::non_bipartite(vec![vec![0.0, 1.0, 0.2], vec![1.0, 0.0, 0.3], vec![0.2, 0.3, 0.0]], None);
        let layout = inst.layout();
        // Edges (0,1), (0,2), (1,2); everyone on (0,1) fully.
        let g = best_response_gains(&layout, &[1.0, 0.0, 0.0]);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.0);
        assert_eq!(g[2], 0.0);
        let g = best_response_gains(&layout, &[0.0, 0.0, 0.0]);
        assert_eq!(g, vec![1.0, 1.0, 0.3]);
    }
}
