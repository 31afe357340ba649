mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kscore::agent::{
    best_response, check_not_obviously_dominated, expected_utility, sequential_monte_carlo, sequential_simulate,
    sequential_trace, subsets_in_order, verify_ic, ReportPolicy, SeqAction, SequentialStrategy, TraceStep,
};
use kscore::mechanisms::{
    best_of_sequential, best_of_static, knapsack_greedy, partition_sequential, partition_static, recommend_threshold_static,
    recommend_truncated, Certificate, Mechanism, Provenance,
};
use kscore::model::{preprocess, Instance, TaskSet};
use kscore::scoring::{build_truncated_separate, to_tabular, ScoringRule, ThresholdRule};

fn seeded(seed: u64, n: usize) -> Instance {
    common::random_preprocessed(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

fn raw(seed: u64, n: usize) -> Instance {
    common::random_raw(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

fn structured_rules(inst: &Instance, support: &TaskSet, eta: u32) -> Vec<ScoringRule> {
    vec![
        ScoringRule::Threshold(ThresholdRule::new(support.clone(), eta)),
        ScoringRule::TruncatedSeparate(build_truncated_separate(&inst.tasks, support, 1.0, 9.0 / 8.0)),
        ScoringRule::TruncatedSeparate(build_truncated_separate(&inst.tasks, support, 11.0, 9.0 / 8.0)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn best_response_dominates_enumerated_deviations(seed in any::<u64>(), n in 1usize..=5, mask in 0u64..32, eta in 1u32..4) {
        let inst = seeded(seed, n);
        let support = TaskSet::from_mask(mask & ((1 << n) - 1));
        for rule in structured_rules(&inst, &support, eta) {
            let br = best_response(&inst, &rule).unwrap();
            for effort in subsets_in_order(&TaskSet::full(n)) {
                for guess in subsets_in_order(&TaskSet::full(n)) {
                    let u = expected_utility(&inst, &rule, &effort, &ReportPolicy::guessing(n, &guess)).unwrap();
                    prop_assert!(br.utility >= u - 1e-9, "{} < {} at {} / {}", br.utility, u, effort, guess);
                }
            }
        }
    }

    #[test]
    fn structured_and_tabular_best_responses_agree(seed in any::<u64>(), n in 1usize..=3, mask in 0u64..8, eta in 1u32..3) {
        let inst = seeded(seed, n);
        let support = TaskSet::from_mask(mask & ((1 << n) - 1));
        for rule in structured_rules(&inst, &support, eta) {
            let tab = ScoringRule::Tabular(to_tabular(&rule, n).unwrap());
            let a = best_response(&inst, &rule).unwrap().utility;
            let b = best_response(&inst, &tab).unwrap().utility;
            prop_assert!((a - b).abs() < 1e-9, "structured {a} vs tabular {b}");
        }
    }

    #[test]
    fn static_pipeline_is_incentive_compatible(seed in any::<u64>(), n in 1usize..=12) {
        let inst = raw(seed, n);
        let sol = best_of_static(&inst).unwrap();
        prop_assert!(verify_ic(&inst, &sol.mechanism).unwrap().holds);
        let oracle_certified = matches!(sol.mechanism.certificate, Certificate::Oracle { .. });
        let nothing_offered = sol.mechanism.recommendation.is_empty() && sol.mechanism.certificate == Certificate::None;
        prop_assert!(oracle_certified || nothing_offered);
        prop_assert!(sol.mechanism.recommendation.iter().all(|i| 2.0 * inst.tasks[i].cost <= inst.tasks[i].prob));
        let best = sol.candidates.iter().map(|c| c.1).fold(0.0, f64::max);
        prop_assert!((sol.value - best).abs() < 1e-12);
    }

    #[test]
    fn sequential_pipeline_certificates(seed in any::<u64>(), n in 1usize..=10) {
        let inst = raw(seed, n);
        let sol = best_of_sequential(&inst).unwrap();
        let m = &sol.mechanism;
        match m.certificate {
            Certificate::Oracle { .. } => prop_assert!(verify_ic(&inst, m).unwrap().holds),
            Certificate::Sequential => {
                let trace = sequential_trace(&inst, m, &SequentialStrategy::eager()).unwrap();
                prop_assert!(check_not_obviously_dominated(&trace, &inst, m).unwrap());
            }
            Certificate::None => prop_assert!(m.recommendation.is_empty()),
            ref other => prop_assert!(false, "unexpected certificate {:?}", other),
        }
    }

    #[test]
    fn partitions_are_exhaustive_and_disjoint(seed in any::<u64>(), n in 1usize..=15) {
        let inst = seeded(seed, n);
        for parts in [partition_static(&inst), partition_sequential(&inst)] {
            let mut seen = TaskSet::empty();
            for set in parts.values() {
                prop_assert!(seen.intersection(set).is_empty());
                seen = seen.union(set);
            }
            prop_assert_eq!(seen, TaskSet::full(n));
        }
    }

    #[test]
    fn truncated_recommendation_beats_fractional_knapsack(seed in any::<u64>(), n in 1usize..=15) {
        let inst = seeded(seed, n);
        let rec = recommend_truncated(&inst);
        prop_assert!(inst.total_cost(&rec) <= 1.5);
        let items: Vec<(f64, f64)> = inst.tasks.iter().map(|t| (t.value, t.cost)).collect();
        let (_, frac) = knapsack_greedy(&items, 1.0);
        let value: f64 = rec.iter().map(|i| inst.tasks[i].value).sum();
        prop_assert!(value >= frac - 1e-9);
    }

    #[test]
    fn threshold_recommendations_keep_marginals(seed in any::<u64>(), n in 1usize..=12) {
        let inst = seeded(seed, n);
        let rec = recommend_threshold_static(&TaskSet::full(n), &inst);
        prop_assert!(!rec.is_empty());
        for i in rec.iter() {
            let others: f64 = rec.iter().filter(|&j| j != i).map(|j| inst.tasks[j].prob).sum();
            let t = &inst.tasks[i];
            prop_assert!((1.0 - others) * t.prob / 2.0 >= t.cost - 1e-9);
        }
    }

    #[test]
    fn sequential_monte_carlo_matches_exact(seed in any::<u64>(), n in 1usize..=6, mask in 1u64..64) {
        let inst = seeded(seed, n);
        let support = TaskSet::from_mask(mask & ((1 << n) - 1));
        let rule = ScoringRule::Threshold(ThresholdRule::new(support.clone(), 1));
        let mech = Mechanism::new(rule, support, Provenance::manual("test"));
        let strat = SequentialStrategy::eager();
        let exact = sequential_simulate(&inst, &mech, &strat).unwrap();
        let mass: f64 = exact.completion_distribution.iter().map(|c| c.1).sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        let (mean, se) = sequential_monte_carlo(&inst, &mech, &strat, 20_000, seed).unwrap();
        prop_assert!((mean - exact.expected_value).abs() <= (4.0 * se).max(1e-9));
        let trace = sequential_trace(&inst, &mech, &strat).unwrap();
        prop_assert!(check_not_obviously_dominated(&trace, &inst, &mech).unwrap());
    }
}

#[test]
fn stopping_early_is_obviously_dominated() {
    let inst = Instance::symmetric(3, 0.5, 0.1, 1.0).unwrap();
    let rec = TaskSet::full(3);
    let mech = Mechanism::new(ScoringRule::Threshold(ThresholdRule::new(rec.clone(), 1)), rec, Provenance::manual("test"));
    let stop_now = [TraceStep { history: vec![], action: SeqAction::Stop }];
    assert!(!check_not_obviously_dominated(&stop_now, &inst, &mech).unwrap());
    let after_signal = [TraceStep { history: vec![(0, kscore::Signal::One)], action: SeqAction::Stop }];
    assert!(check_not_obviously_dominated(&after_signal, &inst, &mech).unwrap());
}

#[test]
fn pipelines_report_in_original_ids() {
    // Task 0 cannot be incentivized and is dropped before the case split.
    let inst = Instance::additive(&[(0.4, 0.5, 5.0), (0.01, 0.8, 1.0), (0.02, 0.6, 1.0)]).unwrap();
    let pre = preprocess(&inst);
    assert_eq!(pre.n(), 2);
    for sol in [best_of_static(&inst).unwrap(), best_of_sequential(&inst).unwrap()] {
        assert!(!sol.mechanism.recommendation.contains(0));
        assert!(sol.mechanism.rule.domain().unwrap().is_subset(&TaskSet::new([1, 2])));
        assert!(verify_ic(&inst, &sol.mechanism).unwrap().holds);
    }
}

#[test]
fn mechanism_documents_roundtrip() {
    let inst = Instance::additive(&[(0.01, 0.8, 1.0), (0.145, 0.3, 2.0), (0.02, 0.1, 1.0)]).unwrap();
    let sol = best_of_static(&inst).unwrap();
    let text = serde_json::to_string(&sol.mechanism).unwrap();
    let back: Mechanism = serde_json::from_str(&text).unwrap();
    assert_eq!(back, sol.mechanism);
    let tab = to_tabular(&sol.mechanism.rule, 3).unwrap();
    let m = Mechanism::new(ScoringRule::Tabular(tab), sol.mechanism.recommendation.clone(), Provenance::manual("t"));
    let back: Mechanism = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back.rule, m.rule);
    assert!(verify_ic(&inst, &back).unwrap().holds);
}
