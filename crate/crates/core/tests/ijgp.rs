mod common;

use std::collections::BTreeSet;

use common::{max_abs_diff, oracle, random_small_instance};
use hmn_core::decomposition::{build_join_graph, elimination_order_over};
use hmn_core::ijgp;
use hmn_core::model::{
    build_network, ConstraintRelation, Cpd, Evidence, HybridMixedNetwork, TabularCpd, VarId, Variable,
};
use hmn_core::potential::Integration;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unobserved(net: &HybridMixedNetwork, ev: &Evidence) -> BTreeSet<VarId> {
    (0..net.len()).map(VarId).filter(|v| !ev.contains(*v)).collect()
}

fn random_row<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let r: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = r.iter().sum();
    r.into_iter().map(|x| x / s).collect()
}

/// Binary cycle A - B - C - A: P(A), P(B|A), P(C|B) and a constraint on
/// (A, C) forbidding one tuple.
fn cycle(seed: u64) -> HybridMixedNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = vec![
        Variable::discrete(0, "A", 2),
        Variable::discrete(1, "B", 2),
        Variable::discrete(2, "C", 2),
    ];
    let cpds = vec![
        Cpd::Tabular(TabularCpd {
            child: VarId(0),
            parents: vec![],
            table: random_row(&mut rng, 2),
        }),
        Cpd::Tabular(TabularCpd {
            child: VarId(1),
            parents: vec![VarId(0)],
            table: [random_row(&mut rng, 2), random_row(&mut rng, 2)].concat(),
        }),
        Cpd::Tabular(TabularCpd {
            child: VarId(2),
            parents: vec![VarId(1)],
            table: [random_row(&mut rng, 2), random_row(&mut rng, 2)].concat(),
        }),
    ];
    let forbidden = vec![vec![rng.random_range(0..2), rng.random_range(0..2)]];
    let constraint = ConstraintRelation::from_forbidden(vec![VarId(0), VarId(2)], &[2, 2], &forbidden);
    build_network(vars, cpds, vec![constraint]).unwrap()
}

#[test]
fn loopy_cycle_converges_near_the_truth() {
    let mut monotone = 0;
    for seed in 0..50 {
        let net = cycle(seed);
        let ev = Evidence::new();
        let order = elimination_order_over(&net, &unobserved(&net, &ev));
        // At i = 2 the whole cycle fits in one mini-bucket; i = 1 splits it.
        let graph = build_join_graph(&net, &order, 1).unwrap();
        assert!(!graph.is_tree(), "seed {seed}");
        let state = ijgp::run(&net, &graph, &ev, 60, 1e-12).unwrap();
        let trace = state.residual_trace();
        let burn_in = 3.min(trace.len());
        if trace[burn_in..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)) {
            monotone += 1;
        }
        let truth = oracle(&net, &ev).unwrap();
        for (v, p) in &truth.discrete {
            let q = state.approx_discrete_marginal(*v).unwrap();
            assert!(max_abs_diff(p, &q) < 0.15, "seed {seed} {v}: {p:?} vs {q:?}");
        }
    }
    assert!(monotone >= 45, "monotone residual on {monotone}/50");
}

#[test]
fn neighbouring_beliefs_agree_at_convergence() {
    let tol = 1e-9;
    let mut checked = 0;
    for seed in 0..40 {
        let (net, ev) = random_small_instance(500 + seed);
        let order = elimination_order_over(&net, &unobserved(&net, &ev));
        let graph = build_join_graph(&net, &order, 1).unwrap();
        let state = ijgp::run(&net, &graph, &ev, 200, tol).unwrap();
        if !state.converged() || state.inconsistent() {
            continue;
        }
        checked += 1;
        let beliefs: Vec<_> = (0..graph.nodes().len()).map(|n| state.belief(n)).collect();
        let marginal = |n: usize, v: VarId| {
            let m = beliefs[n].marginalize_onto(&BTreeSet::from([v]), Integration::Lenient).unwrap();
            let logs: Vec<f64> = m.components().iter().map(|c| c.log_mass().unwrap()).collect();
            let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        for e in graph.edges() {
            for &v in e.label.iter().filter(|v| net.is_discrete(**v)) {
                let (a, b) = (marginal(e.a, v), marginal(e.b, v));
                assert!(max_abs_diff(&a, &b) < 10.0 * tol.sqrt(), "seed {seed} edge {}-{} {v}", e.a, e.b);
            }
        }
    }
    assert!(checked >= 20, "only {checked} runs converged");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn approximate_marginals_are_distributions(seed in any::<u64>(), i in 1usize..4, rounds in 0usize..12) {
        let (net, ev) = random_small_instance(seed);
        let order = elimination_order_over(&net, &unobserved(&net, &ev));
        let graph = build_join_graph(&net, &order, i).unwrap();
        let state = ijgp::run(&net, &graph, &ev, rounds, ijgp::DEFAULT_TOLERANCE).unwrap();
        prop_assert!(state.iterations() <= rounds);
        for v in net.discrete_vars().filter(|v| !ev.contains(*v)) {
            let p = state.approx_discrete_marginal(v).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn pruning_never_removes_true_support(seed in any::<u64>()) {
        let (net, ev) = common::random_tight_instance(seed);
        let truth = oracle(&net, &ev).unwrap();
        let order = elimination_order_over(&net, &unobserved(&net, &ev));
        let graph = build_join_graph(&net, &order, 1).unwrap();
        let state = ijgp::run(&net, &graph, &ev, 10, ijgp::DEFAULT_TOLERANCE).unwrap();
        for (v, p) in &truth.discrete {
            for x in state.zero_support(*v).unwrap() {
                prop_assert!(p[x] == 0.0, "{} = {} pruned with P = {}", v, x, p[x]);
            }
        }
    }
}
