use minilp::{ComparisonOp, OptimizationDirection, Problem};

use super::{MarketInstance, ModelKind};
use crate::error::{Error, Result};

/// Cap on the feasibility gap; also the value reported when every disagreement utility is zero.
pub const DELTA_MAX: f64 = 1e6;

/// Gaps at or below this are treated as zero.
const DELTA_MIN: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityGap {
    pub delta: f64,
    /// Witness allocation in layout coordinates with `u_p(x) ≥ (1+δ) c_p` for every party.
    pub witness: Vec<f64>,
}

/// Largest δ such that some feasible allocation gives every party `(1+δ)` times
/// its disagreement utility.
///
/// Solved as a single LP in `(x, δ)`; δ is then recomputed from the witness so
/// that the reported pair is consistent to machine precision.
pub fn feasibility_gap(inst: &MarketInstance) -> Result<FeasibilityGap> {
    if inst.kind == ModelKind::NonBipartiteLinear {
        return Err(Error::Unsupported { solver: "feasibility gap", kind: inst.kind });
    }
    let layout = inst.layout();
    let disagreement = &layout.disagreement;
    if disagreement.iter().all(|&c| c == 0.0) {
        return Ok(FeasibilityGap { delta: DELTA_MAX, witness: vec![0.0; layout.len()] });
    }

    let n = inst.n;
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = layout.coords.iter().map(|c| lp.add_var(0.0, (0.0, c.cap))).collect();
    let delta = lp.add_var(1.0, (0.0, DELTA_MAX));

    for i in 0..n {
        let row: Vec<_> =
            layout.coords.iter().zip(&vars).filter(|(c, _)| c.agent == i).map(|(_, &v)| (v, 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Le, 1.0);
        let col: Vec<_> =
            layout.coords.iter().zip(&vars).filter(|(c, _)| c.good == i).map(|(_, &v)| (v, 1.0)).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Le, 1.0);
    }
    for (p, &cp) in disagreement.iter().enumerate() {
        if cp <= 0.0 {
            continue;
        }
        let mut expr: Vec<_> = Vec::new();
        for (c, &v) in layout.coords.iter().zip(&vars) {
            if c.agent == p && c.agent_util != 0.0 {
                expr.push((v, c.agent_util));
            }
            if layout.partner_party(c) == Some(p) && c.partner_util != 0.0 {
                expr.push((v, c.partner_util));
            }
        }
        expr.push((delta, -cp));
        lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, cp);
    }

    let solution = match lp.solve() {
        Ok(s) => s,
        Err(minilp::Error::Infeasible) => {
            return Err(Error::Infeasible("no allocation reaches the disagreement point".into()))
        }
        Err(e) => return Err(Error::Lp(e.to_string())),
    };
    let mut witness: Vec<f64> = layout.coords.iter().zip(&vars).map(|(c, &v)| solution[v].clamp(0.0, c.cap)).collect();
    // The simplex leaves rows and columns a few ulps over 1; scale back inside.
    let worst = layout.agent_loads(&witness).into_iter().chain(layout.good_loads(&witness)).fold(1.0, f64::max);
    if worst > 1.0 {
        witness.iter_mut().for_each(|v| *v /= worst);
    }
    let utils = layout.utilities(&witness);
    let delta = disagreement
        .iter()
        .zip(&utils)
        .filter(|(&cp, _)| cp > 0.0)
        .map(|(&cp, &u)| u / cp - 1.0)
        .fold(DELTA_MAX, f64::min);
    if delta <= DELTA_MIN {
        return Err(Error::Infeasible(format!(
            "feasibility gap {delta:.3e}: no allocation strictly improves on the disagreement point"
        )));
    }
    Ok(FeasibilityGap { delta, witness })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(u: Vec<Vec<f64>>, c: Vec<f64>) -> MarketInstance {
        MarketInstance::one_sided_linear(u, Some(c))
    }

    #[test]
    fn fisher_gives_sentinel() {
        let g = feasibility_gap(&lin(vec![vec![1.0, 0.5], vec![0.5, 1.0]], vec![0.0, 0.0])).unwrap();
        assert_eq!(g.delta, DELTA_MAX);
    }

    #[test]
    fn identity_at_disagreement_is_infeasible() {
        let r = feasibility_gap(&lin(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]));
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn unreachable_disagreement_is_infeasible() {
        let r = feasibility_gap(&lin(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![2.0, 0.0]));
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn half_disagreement_doubles() {
        let g = feasibility_gap(&lin(vec![vec![1.0, 0.5], vec![0.5, 1.0]], vec![0.5, 0.5])).unwrap();
        assert!((g.delta - 1.0).abs() < 1e-9);
        assert!((g.witness[0] - 1.0).abs() < 1e-9 && (g.witness[3] - 1.0).abs() < 1e-9);

        // Independent check: scan the doubly stochastic family [[t, 1-t], [1-t, t]].
        let mut best = f64::NEG_INFINITY;
        for k in 0..=10_000 {
            let t = k as f64 / 10_000.0;
            let u = t + 0.5 * (1.0 - t);
            best = best.max(u / 0.5 - 1.0);
        }
        assert!((g.delta - best).abs() < 1e-9);
    }

    #[test]
    fn witness_respects_constraints() {
        let inst = lin(vec![vec![1.0, 0.2, 0.7], vec![0.3, 1.0, 0.1], vec![0.9, 0.4, 1.0]], vec![0.3, 0.5, 0.2]);
        let g = feasibility_gap(&inst).unwrap();
        let layout = inst.layout();
        let u = layout.utilities(&g.witness);
        for (p, &c) in inst.c.iter().enumerate() {
            assert!(u[p] >= (1.0 + g.delta) * c - 1e-9);
        }
        for load in layout.agent_loads(&g.witness).into_iter().chain(layout.good_loads(&g.witness)) {
            assert!(load <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn non_bipartite_unsupported() {
        let inst = MarketInstance::non_bipartite(vec![vec![0.0, 1.0], vec![1.0, 0.0]], Some(vec![0.5, 0.5]));
        assert!(matches!(feasibility_gap(&inst), Err(Error::Unsupported { .. })));
    }
}
