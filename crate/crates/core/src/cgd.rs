//! Conditional gradient (Frank–Wolfe) over matching and flow polytopes.
//!
//! The Nash objective `Σ log(u_p − c_p)` is replaced by `ψ = Σ η(u_p − c_p; x0)`,
//! where `η` continues the logarithm below `x0` by its second-order Taylor
//! expansion. The threshold is chosen below the utility every agent is
//! guaranteed at the optimum, so both programs share their optimum while `ψ`
//! is smooth on the whole polytope.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Layout, MarketInstance, ModelKind, DELTA_MAX};
use crate::oracles::{self, max_weight_bipartite_matching, max_weight_general_matching};

/// Quadratic extension of `log` at `x0 > 0`.
pub fn eta(x: f64, x0: f64) -> f64 {
    if x <= x0 {
        let d = (x - x0) / x0;
        x0.ln() + d - 0.5 * d * d
    } else {
        x.ln()
    }
}

/// Derivative of [`eta`] in `x`.
pub fn eta_prime(x: f64, x0: f64) -> f64 {
    if x <= x0 {
        (2.0 * x0 - x) / (x0 * x0)
    } else {
        1.0 / x
    }
}

/// Parameters of `ψ` for one (normalized) instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothedObjective {
    pub kind: ModelKind,
    pub n: usize,
    /// Knee of `η`, shared by every party.
    pub x0: f64,
    pub kappa: f64,
    pub delta: Option<f64>,
    /// Smoothness constant of `ψ` over the polytope.
    pub smoothness: f64,
}

impl SmoothedObjective {
    /// Build the objective for a normalized instance.
    ///
    /// `delta` is the feasibility gap; it is required whenever some disagreement
    /// utility is positive. Two-sided markets without disagreement utilities use
    /// the capped gap [`DELTA_MAX`].
    pub fn new(inst: &MarketInstance, delta: Option<f64>) -> Result<Self> {
        let n = inst.n as f64;
        let kappa = inst.kappa();
        if !kappa.is_finite() {
            return Err(Error::DegenerateAgent(0));
        }
        let fisher = inst.is_fisher();
        let endowment_x0 = |delta: f64| -> Result<f64> {
            if !(delta > 0.0) {
                return Err(Error::Infeasible(format!("feasibility gap {delta} is not positive")));
            }
            Ok(1.0 / (2.0 * n * n * (1.0 + 1.0 / delta) * kappa))
        };
        let (x0, smoothness, delta) = match inst.kind {
            ModelKind::NonBipartiteLinear => {
                if !fisher {
                    return Err(Error::Unsupported { solver: "cgd with disagreement utilities", kind: inst.kind });
                }
                let x0 = 1.0 / (2.0 * kappa * n * n);
                (x0, 1.0 / (x0 * x0), None)
            }
            ModelKind::OneSidedLinear | ModelKind::OneSidedSplc if fisher => {
                let x0 = 1.0 / (2.0 * kappa * n);
                (x0, 1.0 / (x0 * x0), None)
            }
            ModelKind::OneSidedLinear | ModelKind::OneSidedSplc => {
                let d = delta.ok_or_else(|| {
                    Error::InvalidParameter("feasibility gap required for disagreement utilities".into())
                })?;
                let x0 = endowment_x0(d)?;
                (x0, 1.0 / (x0 * x0), Some(d))
            }
            ModelKind::TwoSidedSplc => {
                let d = if fisher {
                    delta.unwrap_or(DELTA_MAX)
                } else {
                    delta.ok_or_else(|| {
                        Error::InvalidParameter("feasibility gap required for disagreement utilities".into())
                    })?
                };
                let x0 = endowment_x0(d)?;
                // Each coordinate feeds two parties, doubling the curvature bound.
                (x0, 2.0 / (x0 * x0), Some(d))
            }
        };
        Ok(SmoothedObjective { kind: inst.kind, n: inst.n, x0, kappa, delta, smoothness })
    }

    /// Squared diameter bound of the feasible polytope.
    pub fn diameter_sq(&self) -> f64 {
        4.0 * self.n as f64
    }

    /// Theoretical iteration bound `⌈D²L/ε⌉`.
    pub fn iteration_cap(&self, eps: f64) -> u64 {
        let cap = (self.diameter_sq() * self.smoothness / eps).ceil();
        if cap >= u64::MAX as f64 {
            u64::MAX
        } else {
            cap as u64
        }
    }
}

/// `ψ(x)` and its gradient in layout coordinates.
pub fn psi_and_grad(layout: &Layout, obj: &SmoothedObjective, x: &[f64]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; layout.len()];
    let mut slopes = vec![0.0; layout.parties()];
    let u = layout.utilities(x);
    let value = psi_into(layout, obj, &u, &mut slopes, &mut grad);
    (value, grad)
}

pub fn psi(layout: &Layout, obj: &SmoothedObjective, x: &[f64]) -> f64 {
    let u = layout.utilities(x);
    u.iter().zip(&layout.disagreement).map(|(&up, &cp)| eta(up - cp, obj.x0)).sum()
}

fn psi_into(layout: &Layout, obj: &SmoothedObjective, u: &[f64], slopes: &mut [f64], grad: &mut [f64]) -> f64 {
    let mut value = 0.0;
    for p in 0..u.len() {
        let s = u[p] - layout.disagreement[p];
        value += eta(s, obj.x0);
        slopes[p] = eta_prime(s, obj.x0);
    }
    for (g, c) in grad.iter_mut().zip(&layout.coords) {
        let mut v = c.agent_util * slopes[c.agent];
        if let Some(q) = layout.partner_party(c) {
            v += c.partner_util * slopes[q];
        }
        *g = v;
    }
    value
}

/// Vertex of the feasible polytope maximizing `w·y` (weights must be non-negative).
pub fn linear_oracle(layout: &Layout, w: &[f64]) -> Vec<f64> {
    let n = layout.n;
    let mut y = vec![0.0; layout.len()];
    match layout.kind {
        ModelKind::OneSidedLinear => {
            let m: Vec<Vec<f64>> = w.chunks(n).map(<[f64]>::to_vec).collect();
            let matching = max_weight_bipartite_matching(&m);
            for (i, j) in matching.pairs(true) {
                y[i * n + j] = 1.0;
            }
        }
        ModelKind::NonBipartiteLinear => {
            let mut m = vec![vec![0.0; n]; n];
            for (c, &wk) in layout.coords.iter().zip(w) {
                m[c.agent][c.good] = wk;
            }
            let matching = max_weight_general_matching(&m);
            for (a, b) in matching.pairs(false) {
                y[layout.chain_index(a, b).expect("edge in layout")] = 1.0;
            }
        }
        ModelKind::OneSidedSplc | ModelKind::TwoSidedSplc => {
            y = oracles::assign_flat(n, &layout.coords, w);
        }
    }
    y
}

/// Frank–Wolfe gap `max_v ∇ψ(x)·(v − x)`, an upper bound on `ψ(x*) − ψ(x)`.
pub fn fw_gap(layout: &Layout, obj: &SmoothedObjective, x: &[f64]) -> f64 {
    let (_, grad) = psi_and_grad(layout, obj, x);
    let mut y = linear_oracle(layout, &grad);
    if layout.kind.is_splc() {
        oracles::shift_in_place(layout, &mut y);
    }
    grad.iter().zip(y.iter().zip(x)).map(|(g, (yv, xv))| g * (yv - xv)).sum()
}

#[derive(Clone, Debug)]
pub struct FwOptions {
    pub eps: f64,
    /// Overrides the theoretical cap `⌈D²L/ε⌉`.
    pub max_iters: Option<u64>,
    pub trace: bool,
}

impl FwOptions {
    pub fn new(eps: f64) -> Self {
        FwOptions { eps, max_iters: None, trace: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FwTraceRow {
    pub t: u64,
    pub psi: f64,
    pub fw_gap: f64,
    pub min_utility_minus_c: f64,
    pub step_size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    /// Frank–Wolfe steps applied to reach the returned iterate.
    pub iterations: u64,
    pub iteration_cap: u64,
    /// Smallest gap seen; certifies `ψ(x*) − ψ(x) ≤ gap` for the returned `x`.
    pub gap: f64,
    pub converged: bool,
    pub psi: f64,
    #[serde(skip)]
    pub trace: Vec<FwTraceRow>,
}

#[derive(Clone, Debug)]
pub struct FwSolution {
    /// Allocation in layout coordinates.
    pub x: Vec<f64>,
    pub utilities: Vec<f64>,
    pub report: SolveReport,
}

/// Run conditional gradient from `x = 0` until the gap is at most `ε` or the cap is hit.
///
/// `inst` must be normalized and `obj` built from it. On hitting the cap the
/// iterate with the smallest gap is returned and `converged` is false.
pub fn fw_solve(inst: &MarketInstance, obj: &SmoothedObjective, opts: &FwOptions) -> Result<FwSolution> {
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {}", opts.eps)));
    }
    let layout = inst.layout();
    let m = layout.len();
    let splc = layout.kind.is_splc();
    let cap = opts.max_iters.unwrap_or_else(|| obj.iteration_cap(opts.eps));

    let mut x = vec![0.0; m];
    let mut grad = vec![0.0; m];
    let mut slopes = vec![0.0; layout.parties()];
    let mut best_x = x.clone();
    let mut best_gap = f64::INFINITY;
    let mut best_t = 0;
    let mut best_psi = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut t: u64 = 1;
    let converged = loop {
        let u = layout.utilities(&x);
        let value = psi_into(&layout, obj, &u, &mut slopes, &mut grad);
        let mut y = linear_oracle(&layout, &grad);
        if splc {
            oracles::shift_in_place(&layout, &mut y);
        }
        let gap: f64 = grad.iter().zip(y.iter().zip(&x)).map(|(g, (yv, xv))| g * (yv - xv)).sum();
        let alpha = 2.0 / (t as f64 + 1.0);
        if opts.trace {
            let min_slack = u.iter().zip(&layout.disagreement).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
            trace.push(FwTraceRow {
                t: t - 1,
                psi: value,
                fw_gap: gap,
                min_utility_minus_c: min_slack,
                step_size: alpha,
            });
        }
        if gap < best_gap {
            best_gap = gap;
            best_t = t - 1;
            best_psi = value;
            if gap > opts.eps {
                best_x.copy_from_slice(&x);
            }
        }
        if gap <= opts.eps {
            break true;
        }
        if t > cap {
            x = best_x;
            break false;
        }
        for (xv, yv) in x.iter_mut().zip(&y) {
            *xv = (1.0 - alpha) * *xv + alpha * yv;
        }
        if splc {
            oracles::shift_in_place(&layout, &mut x);
        }
        t += 1;
    };
    let utilities = layout.utilities(&x);
    Ok(FwSolution {
        x,
        utilities,
        report: SolveReport { iterations: best_t, iteration_cap: cap, gap: best_gap, converged, psi: best_psi, trace },
    })
}
