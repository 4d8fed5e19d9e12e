mod common;

use std::collections::BTreeSet;

use common::oracle;
use hmn_core::genbench::experiment::{run_experiment, Algorithm};
use hmn_core::genbench::io::network_to_string;
use hmn_core::genbench::{
    absolute_error, generate, kl_distance, relative_error, select_evidence, BudgetConfig, ExperimentConfig,
    GeneratorParams,
};
use hmn_core::model::{Evidence, VarId};
use hmn_core::Error;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = GeneratorParams> {
    (2usize..12, 0usize..5, 2usize..4, any::<u64>()).prop_flat_map(|(n1, n2, k, seed)| {
        let scopes = n1 * (n1 - 1) / 2;
        (0..=scopes.min(10), 0..=n1 + n2, 0usize..4, 0..k * k).prop_map(move |(c1, c2, p, t)| {
            GeneratorParams::new(n1, n2, k, c1, c2, p, t, seed)
        })
    })
}

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_is_deterministic(p in params()) {
        let a = network_to_string(&generate(&p).unwrap(), &Evidence::new()).unwrap();
        let b = network_to_string(&generate(&p).unwrap(), &Evidence::new()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn generated_networks_match_their_parameters(p in params()) {
        let net = generate(&p).unwrap();
        prop_assert_eq!(net.discrete_vars().count(), p.n1);
        prop_assert_eq!(net.continuous_vars().count(), p.n2);
        prop_assert!(net.discrete_vars().all(|v| net.cardinality(v) == p.k));
        prop_assert_eq!(net.constraints().len(), p.c1);
        let mut scopes = BTreeSet::new();
        for c in net.constraints() {
            prop_assert_eq!(c.scope.len(), 2);
            prop_assert!(c.scope.iter().all(|v| net.is_discrete(*v)));
            prop_assert_eq!(c.allowed.len(), p.k * p.k - p.t);
            let mut s = c.scope.clone();
            s.sort();
            prop_assert!(s[0] != s[1]);
            prop_assert!(scopes.insert(s), "repeated constraint scope");
        }
        let with_parents = (0..net.len()).filter(|&v| !net.parents(VarId(v)).is_empty()).count();
        prop_assert!(with_parents <= p.c2);
        for v in 0..net.len() {
            prop_assert!(net.parents(VarId(v)).len() <= p.p);
        }
    }

    #[test]
    fn metrics_vanish_on_identical_tables(p in (2usize..6).prop_flat_map(distribution)) {
        prop_assert_eq!(absolute_error(&p, &p).unwrap(), 0.0);
        prop_assert_eq!(relative_error(&p, &p).unwrap(), 0.0);
        prop_assert!(kl_distance(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn metrics_are_nonnegative_and_bounded(
        (p, q) in (2usize..6).prop_flat_map(|n| (distribution(n), distribution(n)))
    ) {
        let abs = absolute_error(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&abs));
        prop_assert_eq!(abs, absolute_error(&q, &p).unwrap());
        prop_assert!(relative_error(&p, &q).unwrap() >= 0.0);
        // Mean of per-value terms; the sum is the usual KL, which is >= 0.
        prop_assert!(kl_distance(&p, &q).unwrap() * p.len() as f64 >= -1e-15);
    }
}

#[test]
fn mismatched_tables_have_no_metric() {
    assert!(matches!(absolute_error(&[0.5, 0.5], &[1.0]), Err(Error::UndefinedMetric(_))));
    assert!(matches!(kl_distance(&[], &[]), Err(Error::UndefinedMetric(_))));
}

#[test]
fn infeasible_parameters_are_rejected() {
    let bad = [
        GeneratorParams::new(3, 0, 2, 4, 0, 0, 1, 0),
        GeneratorParams::new(3, 0, 2, 1, 0, 0, 4, 0),
        GeneratorParams::new(3, 0, 2, 0, 4, 1, 0, 0),
        GeneratorParams::new(0, 0, 2, 0, 0, 0, 0, 0),
    ];
    for p in bad {
        assert!(matches!(generate(&p), Err(Error::InfeasibleParams(_))), "{p:?}");
    }
}

#[test]
fn selected_evidence_has_positive_probability() {
    let mut tested = 0;
    for seed in 0..200 {
        let net = generate(&GeneratorParams::new(9, 3, 3, 6, 10, 2, 4, seed)).unwrap();
        // Networks whose constraints admit no solution cannot carry evidence.
        let Ok(ev) = select_evidence(&net, 0.3, seed) else { continue };
        assert_eq!(ev.len(), 3);
        assert!(oracle(&net, &ev).is_some(), "seed {seed}");
        tested += 1;
        if tested == 50 {
            return;
        }
    }
    panic!("only {tested} networks had solutions");
}

#[test]
fn evidence_selection_is_deterministic() {
    let net = generate(&GeneratorParams::new(10, 4, 2, 4, 12, 2, 1, 3)).unwrap();
    let a = network_to_string(&net, &select_evidence(&net, 0.5, 11).unwrap()).unwrap();
    let b = network_to_string(&net, &select_evidence(&net, 0.5, 11).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn report_covers_the_whole_grid() {
    let config = ExperimentConfig {
        params: vec![GeneratorParams::new(8, 2, 2, 3, 8, 2, 1, 0), GeneratorParams::new(8, 2, 2, 3, 8, 2, 2, 0)],
        instances: 2,
        evidence_fraction: 0.1,
        budget: BudgetConfig::Samples(300),
        ijgp_iterations: 5,
        i_values: vec![0, 1, 2, 3],
        w_values: vec![0, 1, 2, 3],
        seed: 5,
        record_wall_time: false,
        max_table_size: 5e7,
    };
    let report = run_experiment(&config).unwrap();
    let solved: BTreeSet<usize> = report.cells.iter().map(|c| c.row.instance_id).collect();
    assert_eq!(solved.len() + report.skipped.len(), 4);
    assert_eq!(report.cells.len(), 16 * solved.len());
    for id in &solved {
        let cells: BTreeSet<(usize, usize)> = report
            .cells
            .iter()
            .filter(|c| c.row.instance_id == *id)
            .map(|c| (c.row.i, c.row.w))
            .collect();
        assert_eq!(cells.len(), 16);
    }
    for c in &report.cells {
        assert_eq!(c.row.algorithm, Algorithm::for_cell(c.row.i, c.row.w));
        assert_eq!(c.row.rejection_rate.is_some(), c.row.algorithm != Algorithm::Ijgp);
        assert_eq!(c.row.wall_ms, 0);
        assert!(c.row.abs_err.is_finite() && c.row.kl.is_finite());
    }
    let csv = report.to_csv_string().unwrap();
    assert_eq!(csv.lines().count(), report.cells.len() + 1);
    assert!(report.summary_table().contains("T = 1"));
}
