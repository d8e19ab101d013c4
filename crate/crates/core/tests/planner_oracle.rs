//! The planner against brute-force minimum-cost oracles.

mod common;

use std::collections::HashSet;

use proptest::prelude::*;

use igdebias::features::{extract_all, Coupling, Extractor};
use igdebias::infogain::{goal_check, max_imbalance, tabulate, ContingencyTable};
use igdebias::planner::{apply_flows, plan, replan_residual, verify_plan, PlanError};
use igdebias::{FeatureConfig, FeatureSpec, MockBackend, NegationLexicon, Task};

fn numeric_spec() -> FeatureSpec {
    let mut spec = FeatureConfig::default()
        .get(Task::Nli, "lexical_overlap")
        .unwrap()
        .clone();
    spec.name = "feature".into();
    spec
}

fn coupled_spec() -> FeatureSpec {
    let mut spec = FeatureConfig::default().get(Task::Qa, "popularity").unwrap().clone();
    spec.name = "feature".into();
    spec
}

fn cost(counts: &[Vec<u64>], eps: u64) -> Option<u64> {
    let t = ContingencyTable::from_counts(counts.to_vec()).unwrap();
    match plan(&t, &numeric_spec(), eps, 0) {
        Ok(p) => Some(p.cost),
        Err(PlanError::Infeasible { .. }) => None,
        Err(e) => panic!("{counts:?}: {e}"),
    }
}

fn all_tables(rows: usize, cols: usize, max_cell: u64) -> Vec<Vec<Vec<u64>>> {
    let cells = rows * cols;
    let mut out = Vec::new();
    let mut flat = vec![0u64; cells];
    loop {
        if flat.iter().any(|&c| c > 0) {
            out.push(flat.chunks(cols).map(<[u64]>::to_vec).collect());
        }
        let mut k = 0;
        loop {
            if k == cells {
                return out;
            }
            if flat[k] < max_cell {
                flat[k] += 1;
                break;
            }
            flat[k] = 0;
            k += 1;
        }
    }
}

#[test]
fn the_three_oracles_agree() {
    for (rows, cols, max_cell) in [(2, 2, 4), (3, 2, 3), (2, 3, 2)] {
        for counts in all_tables(rows, cols, max_cell) {
            for eps in 0..=2 {
                let bands = common::min_cost_by_bands(&counts, eps);
                assert_eq!(bands, common::min_cost_by_targets(&counts, eps), "{counts:?} ε={eps}");
                if max_cell <= 2 || cols == 2 {
                    assert_eq!(bands, common::min_cost_by_flows(&counts, eps), "{counts:?} ε={eps}");
                }
            }
        }
    }
}

#[test]
fn exhaustive_small_tables_match_flow_enumeration() {
    for (rows, cols, max_cell) in [(2, 2, 5), (3, 2, 3), (2, 3, 2)] {
        for counts in all_tables(rows, cols, max_cell) {
            for eps in 0..=2 {
                assert_eq!(
                    cost(&counts, eps),
                    common::min_cost_by_flows(&counts, eps),
                    "{counts:?} ε={eps}"
                );
            }
        }
    }
}

#[test]
fn infeasibility_reports_the_smallest_workable_epsilon() {
    let t = ContingencyTable::from_counts(vec![vec![9, 0, 0], vec![1, 1, 0]]).unwrap();
    let Err(PlanError::Infeasible { min_epsilon, .. }) = plan(&t, &numeric_spec(), 0, 0) else {
        panic!("expected infeasible");
    };
    assert_eq!(min_epsilon, 3);
    assert!(plan(&t, &numeric_spec(), min_epsilon, 0).is_ok());
    assert_eq!(cost(t.counts(), 2), None);
}

#[test]
fn a_single_value_is_degenerate() {
    let t = ContingencyTable::from_counts(vec![vec![4], vec![1]]).unwrap();
    assert!(matches!(plan(&t, &numeric_spec(), 0, 0), Err(PlanError::Degenerate(_))));
}

#[test]
fn coupled_tables_match_marginal_oracle() {
    for cols in 2..=3usize {
        for totals in all_tables(1, cols, 7) {
            let totals = &totals[0];
            let mut counts = vec![vec![0; cols]; cols];
            for b in 0..cols {
                counts[b][b] = totals[b];
            }
            let t = ContingencyTable::from_counts(counts)
                .unwrap()
                .with_coupling(Coupling::AnswerEqualsFeature)
                .unwrap();
            for eps in 0..=2 {
                let oracle = common::min_cost_coupled(totals, eps);
                let p = match plan(&t, &coupled_spec(), eps, 0) {
                    Ok(p) => p,
                    Err(PlanError::Infeasible { .. }) => {
                        assert_eq!(oracle, None, "{totals:?} ε={eps}");
                        continue;
                    }
                    Err(e) => panic!("{totals:?}: {e}"),
                };
                assert_eq!(Some(p.cost), oracle, "{totals:?} ε={eps}");
                assert!(verify_plan(&t, &p, eps));
                for f in &p.flows {
                    assert_eq!(
                        f.answer_class_to,
                        t.answer_classes()[t.value_index(&f.value_to).unwrap()]
                    );
                }
            }
        }
    }
}

#[test]
fn tabulated_plans_select_distinct_members_reproducibly() {
    let ds = common::sentiment_dataset([[25, 5], [8, 22]]);
    let (mock, lex, cfg) = (
        MockBackend::default(),
        NegationLexicon::default(),
        FeatureConfig::default(),
    );
    let ds = extract_all(&ds, &cfg, &Extractor::new(&lex, &mock)).unwrap();
    let spec = cfg.get(Task::Sa, "negation").unwrap();
    let t = tabulate(&ds, spec).unwrap();
    let a = plan(&t, spec, 0, 3).unwrap();
    assert_eq!(a, plan(&t, spec, 0, 3).unwrap());
    assert!(a.is_fully_selected());
    let ids: Vec<&str> = a.selected_ids().collect();
    assert_eq!(ids.len() as u64, a.cost);
    assert_eq!(ids.iter().collect::<HashSet<_>>().len(), ids.len());
    for f in &a.flows {
        for id in &f.sample_ids {
            let s = ds.get(id).unwrap();
            assert_eq!(s.answer, f.answer_class_from);
            assert_eq!(s.feature_value("negation"), Some(f.value_from.as_str()));
        }
    }
    let others: Vec<_> = (0..8).map(|seed| plan(&t, spec, 0, seed).unwrap().flows).collect();
    assert!(others.iter().any(|f| *f != a.flows), "seed has no effect on selection");
}

#[test]
fn replan_handles_frozen_sources() {
    let ds = common::sentiment_dataset([[12, 4], [4, 12]]);
    let (mock, lex, cfg) = (
        MockBackend::default(),
        NegationLexicon::default(),
        FeatureConfig::default(),
    );
    let ds = extract_all(&ds, &cfg, &Extractor::new(&lex, &mock)).unwrap();
    let spec = cfg.get(Task::Sa, "negation").unwrap();
    let t = tabulate(&ds, spec).unwrap();

    let all_absent_positive: HashSet<String> = (0..12).map(|i| format!("sa-positive-absent-{i:04}")).collect();
    let p = replan_residual(&t, spec, 0, &all_absent_positive, 1);
    assert!(p.selected_ids().all(|id| !all_absent_positive.contains(id)));
    assert!(max_imbalance(&p.projected_table) <= max_imbalance(&t));

    let none = replan_residual(&t, spec, 0, &HashSet::new(), 1);
    assert!(!none.best_effort);
    assert_eq!(none.cost, plan(&t, spec, 0, 1).unwrap().cost);

    let every: HashSet<String> = ds.samples().iter().map(|s| s.id.clone()).collect();
    let stuck = replan_residual(&t, spec, 0, &every, 1);
    assert!(stuck.best_effort && stuck.is_empty());
    assert_eq!(stuck.effective_epsilon, max_imbalance(&t));
}

#[test]
fn three_failures_leave_a_small_residual() {
    let ds = common::sentiment_dataset([[15, 5], [5, 15]]);
    let (mock, lex, cfg) = (
        MockBackend::default(),
        NegationLexicon::default(),
        FeatureConfig::default(),
    );
    let ds = extract_all(&ds, &cfg, &Extractor::new(&lex, &mock)).unwrap();
    let spec = cfg.get(Task::Sa, "negation").unwrap();
    let t = tabulate(&ds, spec).unwrap();
    let first = plan(&t, spec, 0, 9).unwrap();
    assert_eq!(first.cost, 10);
    // pretend three of the selected rewrites failed
    let failed: HashSet<String> = first.selected_ids().take(3).map(str::to_string).collect();
    let mut counts = first.projected_table.counts().to_vec();
    let f = &first.flows[0];
    let (y, b, b2) = (
        t.class_index(&f.answer_class_from).unwrap(),
        t.value_index(&f.value_from).unwrap(),
        t.value_index(&f.value_to).unwrap(),
    );
    counts[y][b] += 3;
    counts[y][b2] -= 3;
    let actual = t.with_counts(counts).unwrap();
    let residual = replan_residual(&actual, spec, 0, &failed, 10);
    assert!(residual.cost <= 3);
    assert!(residual.selected_ids().all(|id| !failed.contains(id)));
    assert_eq!(max_imbalance(&residual.projected_table), 0);
}

fn table_strategy(max_rows: usize, max_cols: usize, max_cell: u64) -> impl Strategy<Value = Vec<Vec<u64>>> {
    (1..=max_rows, 2..=max_cols)
        .prop_flat_map(move |(r, c)| prop::collection::vec(prop::collection::vec(0..=max_cell, c), r))
        .prop_filter("non-empty", |t| t.iter().flatten().any(|&c| c > 0))
}

proptest! {
    #[test]
    fn plans_match_band_oracle(counts in table_strategy(3, 3, 9), eps in 0u64..4) {
        prop_assert_eq!(cost(&counts, eps), common::min_cost_by_bands(&counts, eps));
    }

    #[test]
    fn plans_verify_and_reach_the_goal(counts in table_strategy(3, 3, 12), eps in 0u64..4, seed in any::<u64>()) {
        let t = ContingencyTable::from_counts(counts).unwrap();
        if let Ok(p) = plan(&t, &numeric_spec(), eps, seed) {
            prop_assert!(verify_plan(&t, &p, eps));
            prop_assert_eq!(apply_flows(&t, &p.flows).unwrap(), p.projected_table.clone());
            prop_assert!(goal_check(&p.projected_table, eps).unwrap().goal_met);
            prop_assert_eq!(p.cost, p.flows.iter().map(|f| f.amount).sum::<u64>());
            prop_assert!(p.flows.iter().all(|f| f.amount > 0 && f.value_from != f.value_to));
        }
    }

    #[test]
    fn cost_is_monotone_in_epsilon(counts in table_strategy(3, 3, 9)) {
        let costs: Vec<Option<u64>> = (0..5).map(|e| cost(&counts, e)).collect();
        for w in costs.windows(2) {
            match (w[0], w[1]) {
                (Some(a), Some(b)) => prop_assert!(a >= b, "{:?}", costs),
                (Some(_), None) => prop_assert!(false, "feasibility lost: {:?}", costs),
                _ => {}
            }
        }
    }

    #[test]
    fn zero_cost_iff_goal_already_met(counts in table_strategy(3, 3, 6), eps in 0u64..3) {
        let t = ContingencyTable::from_counts(counts.clone()).unwrap();
        let met = goal_check(&t, eps).unwrap().goal_met;
        match cost(&counts, eps) {
            Some(c) => prop_assert_eq!(c == 0, met),
            None => prop_assert!(!met),
        }
    }

    #[test]
    fn tampered_plans_fail_verification(counts in table_strategy(3, 3, 9), bump in 1u64..3) {
        let t = ContingencyTable::from_counts(counts).unwrap();
        if let Ok(mut p) = plan(&t, &numeric_spec(), 1, 0) {
            if let Some(f) = p.flows.first_mut() {
                f.amount += bump;
                prop_assert!(!verify_plan(&t, &p, 1));
            }
        }
    }

    #[test]
    fn replan_never_raises_imbalance(
        counts in prop::array::uniform2(prop::array::uniform2(0usize..14)),
        frozen_mask in prop::collection::vec(any::<bool>(), 60),
        eps in 0u64..3,
    ) {
        prop_assume!(counts.iter().flatten().any(|&c| c > 0));
        let ds = common::sentiment_dataset(counts);
        let (mock, lex, cfg) = (MockBackend::default(), NegationLexicon::default(), FeatureConfig::default());
        let ds = extract_all(&ds, &cfg, &Extractor::new(&lex, &mock)).unwrap();
        let spec = cfg.get(Task::Sa, "negation").unwrap();
        let t = tabulate(&ds, spec).unwrap();
        let frozen: HashSet<String> = ds
            .samples()
            .iter()
            .zip(frozen_mask.iter().cycle())
            .filter(|(_, &f)| f)
            .map(|(s, _)| s.id.clone())
            .collect();
        let p = replan_residual(&t, spec, eps, &frozen, 5);
        prop_assert!(max_imbalance(&p.projected_table) <= max_imbalance(&t));
        prop_assert!(max_imbalance(&p.projected_table) <= p.effective_epsilon.max(eps));
        prop_assert!(p.selected_ids().all(|id| !frozen.contains(id)));
        prop_assert!(verify_plan(&t, &p, p.effective_epsilon));
        if !p.best_effort {
            prop_assert!(goal_check(&p.projected_table, eps).unwrap().goal_met);
        }
    }
}
