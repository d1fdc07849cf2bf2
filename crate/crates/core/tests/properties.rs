use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nashmatch::certify::{approx_feasibility, fit_duals, kkt_residual, nash_objective};
use nashmatch::cgd::{fw_solve, linear_oracle, psi, psi_and_grad, FwOptions, SmoothedObjective};
use nashmatch::instance::{feasibility_gap, gen_random, normalize, with_endowments};
use nashmatch::mwu::{self, best_bundle, rescale, DualState, MwuOptions};
use nashmatch::oracles::{
    max_weight_bipartite_matching, max_weight_capacitated_assignment, max_weight_general_matching, shift,
};
use nashmatch::reforacle::grid_solve;
use nashmatch::rounding::{bvn_decompose, complete_slack};
use nashmatch::{MarketInstance, ModelKind};

fn any_kind() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::OneSidedLinear),
        Just(ModelKind::OneSidedSplc),
        Just(ModelKind::TwoSidedSplc),
        Just(ModelKind::NonBipartiteLinear),
    ]
}

fn one_sided() -> impl Strategy<Value = ModelKind> {
    prop_oneof![Just(ModelKind::OneSidedLinear), Just(ModelKind::OneSidedSplc)]
}

fn delta_of(inst: &MarketInstance) -> Option<f64> {
    (!inst.is_fisher()).then(|| feasibility_gap(inst).unwrap().delta)
}

/// Random point of the polytope: average of a few vertices, scaled down.
fn random_point(inst: &MarketInstance, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let layout = inst.layout();
    let mut x = vec![0.0; layout.len()];
    let k = 3;
    for _ in 0..k {
        let w: Vec<f64> = (0..layout.len()).map(|_| rng.random()).collect();
        for (xv, v) in x.iter_mut().zip(linear_oracle(&layout, &w)) {
            *xv += v / k as f64;
        }
    }
    let s: f64 = 0.1 + 0.9 * rng.random::<f64>();
    x.iter_mut().for_each(|v| *v *= s);
    x
}

fn argmax_set(row: &[f64]) -> Vec<usize> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..row.len()).filter(|&j| row[j] == m).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalize_is_idempotent(kind in any_kind(), n in 2usize..6, seed in 0u64..1000, sp in 0.0f64..0.7) {
        let inst = gen_random(n, kind, seed, sp).unwrap();
        let once = normalize(&inst).unwrap().0;
        let twice = normalize(&once).unwrap().0;
        prop_assert_eq!(&once, &twice);
        if !kind.is_splc() {
            for (a, b) in inst.utilities.iter().zip(&once.utilities) {
                prop_assert_eq!(argmax_set(a), argmax_set(b));
            }
        }
    }

    #[test]
    fn gap_witness_is_feasible(kind in prop_oneof![Just(ModelKind::OneSidedLinear), Just(ModelKind::OneSidedSplc), Just(ModelKind::TwoSidedSplc)],
                               n in 2usize..5, seed in 0u64..1000, slack in 0.1f64..2.0) {
        let inst = with_endowments(&gen_random(n, kind, seed, 0.3).unwrap(), slack, seed).unwrap();
        let g = feasibility_gap(&inst).unwrap();
        let layout = inst.layout();
        prop_assert!(approx_feasibility(&layout, &g.witness, 1e-12).passed);
        let u = layout.utilities(&g.witness);
        for (ui, ci) in u.iter().zip(&layout.disagreement) {
            prop_assert!(*ui >= (1.0 + g.delta) * ci - 1e-9);
        }
    }

    #[test]
    fn matching_oracles_return_vertices(n in 1usize..8, seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random()).collect()).collect();
        let m = max_weight_bipartite_matching(&w);
        let mut used = vec![false; n];
        for j in m.mate.iter().flatten() {
            prop_assert!(!used[*j]);
            used[*j] = true;
        }
        let sym: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| if a == b { 0.0 } else { w[a.min(b)][a.max(b)] }).collect()).collect();
        let g = max_weight_general_matching(&sym);
        for (a, mate) in g.mate.iter().enumerate() {
            if let Some(b) = mate {
                prop_assert_eq!(g.mate[*b], Some(a));
                prop_assert_ne!(*b, a);
            }
        }
    }

    #[test]
    fn capacitated_output_has_one_fractional_segment_per_chain(n in 1usize..6, seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = vec![vec![Vec::new(); n]; n];
        let mut l = vec![vec![Vec::new(); n]; n];
        for i in 0..n {
            for j in 0..n {
                let k = rng.random_range(1..=3usize);
                let mut s: Vec<f64> = (0..k).map(|_| rng.random()).collect();
                s.sort_by(|a, b| b.total_cmp(a));
                let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random()).collect();
                cuts.sort_by(f64::total_cmp);
                let mut prev = 0.0;
                let mut lens = Vec::new();
                for c in cuts { lens.push(c - prev); prev = c; }
                lens.push(1.0 - prev);
                w[i][j] = s;
                l[i][j] = lens;
            }
        }
        let sol = max_weight_capacitated_assignment(&w, &l);
        for i in 0..n {
            for j in 0..n {
                let fractional = sol.x[i][j].iter().zip(&l[i][j]).filter(|(v, c)| **v > 1e-12 && **v < **c - 1e-12).count();
                prop_assert!(fractional <= 1, "{:?} caps {:?}", sol.x[i][j], l[i][j]);
            }
        }
    }

    #[test]
    fn shift_keeps_totals_and_improves_linear_value(n in 2usize..5, seed in 0u64..10_000) {
        let inst = gen_random(n, ModelKind::OneSidedSplc, seed, 0.2).unwrap();
        let layout = inst.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = layout.coords.iter().map(|c| c.cap * rng.random::<f64>() / 3.0).collect();
        let y = shift(&layout, &x);
        for (a, b) in layout.totals(&x).iter().flatten().zip(layout.totals(&y).iter().flatten()) {
            prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON);
        }
        prop_assert_eq!(shift(&layout, &y), y.clone());
        let value = |v: &[f64]| -> f64 { layout.coords.iter().zip(v).map(|(c, x)| c.agent_util * x).sum() };
        prop_assert!(value(&y) >= value(&x) - 1e-12);
    }

    #[test]
    fn shift_never_hurts_the_smoothed_objective(kind in prop_oneof![Just(ModelKind::OneSidedSplc), Just(ModelKind::TwoSidedSplc)],
                                                 seed in 0u64..10_000) {
        let inst = normalize(&gen_random(3, kind, seed, 0.2).unwrap()).unwrap().0;
        let obj = SmoothedObjective::new(&inst, None).unwrap();
        let layout = inst.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_point(&inst, &mut rng);
        let y = random_point(&inst, &mut rng);
        prop_assert!(psi(&layout, &obj, &shift(&layout, &x)) >= psi(&layout, &obj, &x) - 1e-12);
        // One-sided only: there the gradient is non-increasing along every chain.
        if kind == ModelKind::OneSidedSplc {
            let (_, g) = psi_and_grad(&layout, &obj, &x);
            let dot = |v: &[f64]| -> f64 { g.iter().zip(v).map(|(a, b)| a * b).sum() };
            prop_assert!(dot(&shift(&layout, &y)) >= dot(&y) - 1e-12);
        }
    }

    #[test]
    fn smoothed_objective_equals_log_objective_above_knee(kind in any_kind(), seed in 0u64..10_000) {
        let inst = normalize(&gen_random(3, kind, seed, 0.0).unwrap()).unwrap().0;
        let obj = SmoothedObjective::new(&inst, None).unwrap();
        let layout = inst.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_point(&inst, &mut rng);
        let u = layout.utilities(&x);
        if u.iter().all(|&v| v >= obj.x0) {
            let a = psi(&layout, &obj, &x);
            let b = nash_objective(&inst, &x);
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn fw_iterates_stay_feasible(kind in any_kind(), seed in 0u64..1000, steps in 1u64..60) {
        let inst = normalize(&gen_random(4, kind, seed, 0.3).unwrap()).unwrap().0;
        let obj = SmoothedObjective::new(&inst, None).unwrap();
        let sol = fw_solve(&inst, &obj, &FwOptions { eps: 1e-12, max_iters: Some(steps), trace: false }).unwrap();
        let r = approx_feasibility(&inst.layout(), &sol.x, 1e-12);
        prop_assert!(r.passed, "{r:?}");
    }

    #[test]
    fn rescale_identity_and_budget(kind in one_sided(), n in 2usize..6, seed in 0u64..10_000, slack in 0.2f64..2.0) {
        let inst = normalize(&with_endowments(&gen_random(n, kind, seed, 0.3).unwrap(), slack, seed).unwrap()).unwrap().0;
        let layout = inst.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = DualState::ones(&layout);
        w.p.iter_mut().chain(w.q.iter_mut()).chain(w.h.iter_mut().filter(|v| **v != 0.0)).for_each(|v| *v = 0.1 + rng.random::<f64>());
        let d = rescale(&layout, &w).unwrap();
        let lhs: f64 = d.p.iter().chain(&d.q).chain(&d.h).sum();
        let mut rhs = n as f64;
        for i in 0..n {
            let b = best_bundle(&layout, i, &d).unwrap();
            rhs += b.budget - 1.0;
            let spent = d.unit_price(&layout, b.coord) * b.amount;
            prop_assert!((spent - b.budget).abs() <= 1e-12 * b.budget);
        }
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn mwu_round_invariants(kind in one_sided(), n in 2usize..6, seed in 0u64..10_000) {
        let inst = normalize(&with_endowments(&gen_random(n, kind, seed, 0.2).unwrap(), 0.5, seed).unwrap()).unwrap().0;
        let eps = 0.2;
        let sol = mwu::solve(&inst, &MwuOptions { eps, iterations: Some(400) }).unwrap();
        prop_assert!(sol.trace.sandwich_violation() <= 1e-9);
        let mut prev = sol.trace.ln_phi0;
        for r in &sol.trace.rows {
            prop_assert!(r.sigma > 0.0);
            // Every weight grows by a factor of at most 1 + ε per round.
            prop_assert!(r.ln_phi - prev <= (1.0 + eps).ln() + 1e-12);
            prev = r.ln_phi;
        }
        let layout = inst.layout();
        let u = layout.utilities(&sol.x_bar);
        for i in 0..n {
            prop_assert!(mwu::cp_value(&layout, i, &sol.duals).unwrap() <= u[i] + 1e-9);
        }
        prop_assert!(approx_feasibility(&layout, &sol.x, 0.0).passed);
    }

    #[test]
    fn objective_symmetric_under_relabeling(n in 2usize..6, seed in 0u64..10_000) {
        let inst = with_endowments(&gen_random(n, ModelKind::OneSidedLinear, seed, 0.2).unwrap(), 0.5, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_point(&inst, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
        let permuted = MarketInstance::one_sided_linear(
            perm.iter().map(|&i| inst.utilities[i].clone()).collect(),
            Some(perm.iter().map(|&i| inst.c[i]).collect()),
        );
        let px: Vec<f64> = perm.iter().flat_map(|&i| x[i * n..(i + 1) * n].to_vec()).collect();
        let a = nash_objective(&inst, &x);
        let b = nash_objective(&permuted, &px);
        prop_assert!(a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn bvn_reconstructs_and_respects_term_bound(n in 1usize..7, seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![vec![0.0; n]; n];
        for _ in 0..n + 2 {
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
            let w = rng.random::<f64>() / (n as f64 + 2.0);
            for (i, &j) in perm.iter().enumerate() {
                x[i][j] += w;
            }
        }
        let d = bvn_decompose(&x).unwrap();
        let full = complete_slack(&x).unwrap();
        let rec = d.reconstruct(n);
        for (a, b) in rec.iter().flatten().zip(full.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        prop_assert!(d.terms.len() <= (n - 1) * (n - 1) + 1);
        prop_assert!((d.terms.iter().map(|t| t.weight).sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scaling_an_agent_shifts_objective_and_keeps_optimum(seed in 0u64..10_000, s in 0.2f64..5.0) {
        let inst = gen_random(2, ModelKind::OneSidedLinear, seed, 0.0).unwrap();
        let mut scaled = inst.clone();
        scaled.utilities[0].iter_mut().for_each(|v| *v *= s);
        let x = [0.3, 0.7, 0.6, 0.4];
        let d = nash_objective(&scaled, &x) - nash_objective(&inst, &x);
        prop_assert!((d - s.ln()).abs() <= 1e-12);
        let a = grid_solve(&inst, 1e-4).unwrap();
        let b = grid_solve(&scaled, 1e-4).unwrap();
        prop_assert!((a.totals[0][0] - b.totals[0][0]).abs() <= 2e-4);
    }

    #[test]
    fn grid_oracle_brackets_frank_wolfe(n in 2usize..4, seed in 0u64..10_000, endowed in any::<bool>()) {
        let raw = gen_random(n, ModelKind::OneSidedLinear, seed, 0.3).unwrap();
        let raw = if endowed { with_endowments(&raw, 0.6, seed).unwrap() } else { raw };
        let inst = normalize(&raw).unwrap().0;
        let eps = 1e-4;
        let obj = SmoothedObjective::new(&inst, delta_of(&inst)).unwrap();
        let fw = fw_solve(&inst, &obj, &FwOptions::new(eps)).unwrap();
        let phi = nash_objective(&inst, &fw.x);
        let g = grid_solve(&inst, 1e-5).unwrap();
        prop_assert!(g.objective <= phi + eps + g.error_bound);
        prop_assert!(g.objective >= phi - g.error_bound);
    }

    #[test]
    fn fitted_duals_certify_two_by_two_optima(seed in 0u64..10_000, endowed in any::<bool>()) {
        let raw = gen_random(2, ModelKind::OneSidedLinear, seed, 0.0).unwrap();
        let raw = if endowed { with_endowments(&raw, 0.6, seed).unwrap() } else { raw };
        let inst = normalize(&raw).unwrap().0;
        let g = grid_solve(&inst, 1e-9).unwrap();
        let layout = inst.layout();
        let d = fit_duals(&layout, &g.x).unwrap();
        let r = kkt_residual(&layout, &g.x, &d).unwrap();
        prop_assert!(r.max() <= 1e-6, "{r:?}");
    }
}
