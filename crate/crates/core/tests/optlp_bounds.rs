mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kscore::agent::{subsets_in_order, verify_ic_parts};
use kscore::bounds::{alg_opt_set, cardinality_bound, prob_budget_bound, threshold_stop_level};
use kscore::mechanisms::best_of_static;
use kscore::model::{valuation_value, Instance, Task, TaskSet, Valuation};
use kscore::optlp::simplex::{simplex_solve, LinearProgram, LpStatus, Sense};
use kscore::optlp::{ic_feasible, ic_feasible_full, ic_opt_exact, symmetric_feasible, symmetric_max_effort};
use kscore::scoring::ScoringRule;

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..d {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..d {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..d).map(|i| b[i] / a[i][i]).collect())
}

/// Best objective over the vertices of a bounded feasible region.
fn vertex_optimum(lp: &LinearProgram) -> Option<f64> {
    let d = lp.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = lp.constraints.iter().map(|c| (c.coeffs.clone(), c.rhs)).collect();
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        planes.push((e.clone(), lp.lower[j]));
        planes.push((e, lp.upper[j].expect("bounded")));
    }
    let mut best: Option<f64> = None;
    let m = planes.len();
    for mask in 0u64..(1 << m) {
        if mask.count_ones() as usize != d {
            continue;
        }
        let chosen: Vec<&(Vec<f64>, f64)> = (0..m).filter(|&k| mask >> k & 1 == 1).map(|k| &planes[k]).collect();
        let Some(x) = solve_square(chosen.iter().map(|p| p.0.clone()).collect(), chosen.iter().map(|p| p.1).collect()) else {
            continue;
        };
        if lp.max_violation(&x) > 1e-7 {
            continue;
        }
        let obj: f64 = lp.objective.iter().zip(&x).map(|(a, b)| a * b).sum();
        let obj = if lp.maximize { obj } else { -obj };
        best = Some(best.map_or(obj, |b: f64| b.max(obj)));
    }
    best.map(|b| if lp.maximize { b } else { -b })
}

fn random_lp(seed: u64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(1..=3);
    let mut lp = LinearProgram::new(d);
    lp.objective = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
    lp.maximize = rng.gen_bool(0.5);
    for j in 0..d {
        let lo = rng.gen_range(-2.0..1.0);
        lp.set_bounds(j, lo, Some(lo + rng.gen_range(0.5..4.0)));
    }
    for _ in 0..rng.gen_range(0..=4) {
        let coeffs = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let kinds = if rng.gen_bool(0.8) { 2 } else { 3 };
        let sense = [Sense::Le, Sense::Ge, Sense::Eq][rng.gen_range(0..kinds)];
        lp.add(coeffs, sense, rng.gen_range(-2.0..2.0));
    }
    lp
}

fn coverage_instance(seed: u64, n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let universe = 6;
    let weights: Vec<f64> = (0..universe).map(|_| rng.gen_range(0.1..1.0)).collect();
    let covers: Vec<Vec<usize>> = (0..n).map(|_| (0..universe).filter(|_| rng.gen_bool(0.35)).collect()).collect();
    let tasks = (0..n).map(|i| Task::new(i, rng.gen_range(0.05..0.6), 1.0, 1.0)).collect();
    Instance::new(tasks, Valuation::Coverage { universe_weights: weights, covers }, 1.0).unwrap()
}

fn brute_knapsack(inst: &Instance, budget: f64) -> f64 {
    subsets_in_order(&TaskSet::full(inst.n()))
        .into_iter()
        .filter(|s| inst.total_cost(s) <= budget + 1e-12)
        .map(|s| valuation_value(inst, &s).unwrap())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplex_matches_vertex_enumeration(seed in any::<u64>()) {
        let lp = random_lp(seed);
        let res = simplex_solve(&lp).unwrap();
        match vertex_optimum(&lp) {
            None => prop_assert_eq!(res.status, LpStatus::Infeasible),
            Some(best) => {
                prop_assert_eq!(res.status, LpStatus::Optimal);
                prop_assert!(lp.max_violation(&res.x) < 1e-7);
                prop_assert!((res.objective - best).abs() < 1e-7, "simplex {} vs vertices {}", res.objective, best);
            }
        }
    }

    #[test]
    fn knapsack_matches_enumeration(seed in any::<u64>(), n in 1usize..=10, budget in 0.2f64..2.0) {
        let inst = common::random_preprocessed(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let (v, set) = alg_opt_set(&inst, budget).unwrap();
        prop_assert!((v - brute_knapsack(&inst, budget)).abs() < 1e-9);
        prop_assert!(inst.total_cost(&set) <= budget + 1e-9);
        prop_assert!((valuation_value(&inst, &set).unwrap() - v).abs() < 1e-9);
    }

    #[test]
    fn coverage_knapsack_matches_enumeration(seed in any::<u64>(), n in 1usize..=9) {
        let inst = coverage_instance(seed, n);
        let (v, set) = alg_opt_set(&inst, 1.0).unwrap();
        prop_assert!((v - brute_knapsack(&inst, 1.0)).abs() < 1e-9);
        prop_assert!((valuation_value(&inst, &set).unwrap() - v).abs() < 1e-9);
    }

    #[test]
    fn reduced_lp_agrees_with_full_lp(seed in any::<u64>(), n in 1usize..=2, mask in 0u64..4) {
        let inst = common::random_raw(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let rec = TaskSet::from_mask(mask & ((1 << n) - 1));
        let reduced = ic_feasible(&inst, &rec).unwrap();
        let full = ic_feasible_full(&inst, &rec).unwrap();
        prop_assert_eq!(reduced.is_some(), full.is_some());
        for rule in [reduced, full].into_iter().flatten() {
            prop_assert!(verify_ic_parts(&inst, &ScoringRule::Tabular(rule), &rec).unwrap().holds);
        }
    }

    #[test]
    fn feasibility_survives_cheaper_recommended_tasks(seed in any::<u64>(), n in 1usize..=3, mask in 1u64..8, shrink in 0.0f64..1.0) {
        let inst = common::random_raw(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let rec = TaskSet::from_mask(mask & ((1 << n) - 1));
        prop_assume!(!rec.is_empty());
        if ic_feasible(&inst, &rec).unwrap().is_some() {
            let i = rec.as_slice()[0];
            let mut cheaper = inst.clone();
            cheaper.tasks[i].cost *= shrink;
            prop_assert!(ic_feasible(&cheaper, &rec).unwrap().is_some());
        }
    }

    #[test]
    fn exact_optimum_dominates_pipeline(seed in any::<u64>(), n in 1usize..=3) {
        let inst = common::random_raw(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let opt = ic_opt_exact(&inst).unwrap();
        let sol = best_of_static(&inst).unwrap();
        prop_assert!(opt.value >= sol.value - 1e-9);
        prop_assert!(verify_ic_parts(&inst, &ScoringRule::Tabular(opt.rule), &opt.recommendation).unwrap().holds);
        prop_assert!(opt.value <= brute_knapsack(&inst, f64::INFINITY) + 1e-9);
    }

    #[test]
    fn symmetric_effort_reaches_threshold_stop(n in 1usize..=8, p in 0.05f64..=1.0, r in 1.0f64..6.0) {
        let c = p / (2.0 * r);
        let best = symmetric_max_effort(n, p, c).unwrap();
        prop_assert!(best >= threshold_stop_level(p, c, n));
        if best > 0 {
            let rule = symmetric_feasible(n, p, c, best).unwrap().unwrap();
            for k in 0..n {
                prop_assert!(rule.s[k + 1] >= rule.s[k] - 1e-9);
                prop_assert!(rule.s[k] >= rule.s[k + 1] / 2.0 - 1e-9);
            }
        }
    }
}

#[test]
fn symmetric_extremes() {
    for n in 1..=6 {
        assert_eq!(symmetric_max_effort(n, 0.4, 0.0).unwrap(), n);
        assert_eq!(symmetric_max_effort(n, 0.4, 0.21).unwrap(), 0);
    }
    assert_eq!(symmetric_feasible(3, 0.5, 0.1, 4).unwrap(), None);
}

#[test]
fn threshold_stop_level_boundaries() {
    // Marginals at p = 1/2: 1/4, 1/8, 1/16, ...
    assert_eq!(threshold_stop_level(0.5, 0.25, 10), 0);
    assert_eq!(threshold_stop_level(0.5, 0.2, 10), 1);
    assert_eq!(threshold_stop_level(0.5, 0.1, 10), 2);
    assert_eq!(threshold_stop_level(0.5, 0.1, 1), 1);
    assert_eq!(threshold_stop_level(1.0, 0.1, 10), 1);
    assert_eq!(threshold_stop_level(0.5, 0.0, 7), 7);
}

#[test]
fn probability_budget_examples() {
    let hard = Task::new(0, 0.1, 0.2, 1.0);
    let rep = prob_budget_bound(&[hard, hard]);
    assert!(rep.applicable);
    assert!((rep.value - (0.2 + 0.0)).abs() < 1e-12);
    assert_eq!(rep.satisfied, Some(false));
    let near = Task::new(0, 0.09, 0.2, 1.0);
    let rep = prob_budget_bound(&[near]);
    assert!((rep.value - (16.0 / 3.0 * 0.1 + 0.2)).abs() < 1e-12);
    assert_eq!(rep.satisfied, Some(true));
}

#[test]
fn cardinality_bound_examples() {
    let t = Task::new(0, 0.2, 0.4, 1.0);
    let rep = cardinality_bound(&[t, t, t]);
    assert!(rep.applicable);
    assert!((rep.value - 1.0).abs() < 1e-12);
    assert_eq!(rep.satisfied, Some(false));
    assert!(!cardinality_bound(&[Task::new(0, 0.01, 0.4, 1.0)]).applicable);
    assert!(!cardinality_bound(&[]).applicable);
}
