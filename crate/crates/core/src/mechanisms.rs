//! Recommendation-set procedures, case partitions and the best-of
//! pipelines for static and sequential agents.
//!
//! Tasks are classified by `r = p/(2c)`, the factor by which a unit budget
//! exceeds what the task needs alone. Tasks with large `r` are cheap enough
//! for a truncated separate rule to concentrate; the rest are handled by
//! singletons or threshold rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{self, AgentError, STRUCTURED_MAX};
use crate::model::{marginal_value, preprocess, value_of, Instance, Task, TaskSet, Valuation};
use crate::scoring::{
    build_truncated_separate, single_budget_minimal, ScoringRule, SingleTaskRule, ThresholdRule, TruncatedSeparateRule,
};

/// Cost budget of the truncated-rule recommendation.
pub const TRUNCATED_COST_BUDGET: f64 = 1.5;
/// Cap of the inflated truncated rule.
pub const TRUNCATED_CAP: f64 = 11.0;
/// Per-task inflation of the truncated rule.
pub const TRUNCATED_SCALE: f64 = 9.0 / 8.0;
/// Probability budget of the sequential threshold recommendation.
pub const SEQUENTIAL_PROB_BUDGET: f64 = 0.55;

#[derive(Debug, Error, PartialEq)]
pub enum MechanismError {
    #[error("additive valuations are handled by knapsack_greedy")]
    AdditiveValuation,
    #[error("constructed mechanism failed verification: {0}")]
    NotIncentiveCompatible(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaseLabel {
    X,
    Y1,
    Y2,
    Y3,
    Y1seq,
    Y2seq,
}

impl CaseLabel {
    pub const STATIC: [CaseLabel; 4] = [CaseLabel::X, CaseLabel::Y1, CaseLabel::Y2, CaseLabel::Y3];
    pub const SEQUENTIAL: [CaseLabel; 3] = [CaseLabel::X, CaseLabel::Y1seq, CaseLabel::Y2seq];
}

/// How the mechanism was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub procedure: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<CaseLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Provenance {
    pub fn manual(procedure: &str) -> Self {
        Provenance { procedure: procedure.to_string(), case: None, note: None }
    }

    fn case(procedure: &str, case: CaseLabel, note: Option<&str>) -> Self {
        Provenance { procedure: procedure.to_string(), case: Some(case), note: note.map(str::to_string) }
    }
}

/// Evidence that following the recommendation is optimal for the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Certificate {
    /// Checked against the exact best-response oracle.
    Oracle { gap: f64 },
    /// Guaranteed by the constructor's sufficient condition.
    Analytic { condition: String },
    /// Not claimed for a best-responding agent; the recommendation is
    /// completed by sequential agents that avoid obviously dominated
    /// stopping.
    Sequential,
    None,
}

/// A scoring rule together with the recommended effort set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    #[serde(flatten)]
    pub rule: ScoringRule,
    pub recommendation: TaskSet,
    pub provenance: Provenance,
    #[serde(default = "no_certificate")]
    pub certificate: Certificate,
}

fn no_certificate() -> Certificate {
    Certificate::None
}

impl Mechanism {
    pub fn new(rule: ScoringRule, recommendation: TaskSet, provenance: Provenance) -> Self {
        Mechanism { rule, recommendation, provenance, certificate: Certificate::None }
    }

    /// Posts nothing and recommends nothing.
    pub fn empty(procedure: &str) -> Self {
        Mechanism::new(ScoringRule::zero(), TaskSet::empty(), Provenance::manual(procedure))
    }

    pub fn value(&self, inst: &Instance) -> f64 {
        value_of(inst, self.recommendation.as_slice())
    }

    /// Relabels task `i` as `map[i]`. Tabular rules are left unchanged.
    pub fn remap(&self, map: &[usize]) -> Mechanism {
        let set = |s: &TaskSet| s.iter().map(|i| map[i]).collect::<TaskSet>();
        let rule = match &self.rule {
            ScoringRule::Threshold(r) => ScoringRule::Threshold(ThresholdRule { support: set(&r.support), ..r.clone() }),
            ScoringRule::TruncatedSeparate(r) => ScoringRule::TruncatedSeparate(TruncatedSeparateRule {
                per_task: r.per_task.iter().map(|t| SingleTaskRule { task: map[t.task], ..*t }).collect(),
                ..r.clone()
            }),
            ScoringRule::Single(r) => ScoringRule::Single(SingleTaskRule { task: map[r.task], ..*r }),
            ScoringRule::Tabular(t) => ScoringRule::Tabular(t.clone()),
        };
        Mechanism {
            rule,
            recommendation: set(&self.recommendation),
            provenance: self.provenance.clone(),
            certificate: self.certificate.clone(),
        }
    }
}

/// Greedy knapsack by `value/weight`, highest first (lowest index on
/// ties), stopping at the first item that does not fit. Also returns the
/// fractional-knapsack optimum at the same budget.
pub fn knapsack_greedy(items: &[(f64, f64)], budget: f64) -> (TaskSet, f64) {
    let ratio = |&(v, w): &(f64, f64)| if w == 0.0 { f64::INFINITY } else { v / w };
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| ratio(&items[b]).total_cmp(&ratio(&items[a])).then(a.cmp(&b)));

    let mut chosen = TaskSet::empty();
    let mut used = 0.0;
    for &i in &order {
        if used + items[i].1 > budget {
            break;
        }
        used += items[i].1;
        chosen.insert(i);
    }
    let mut room = budget;
    let mut frac = 0.0;
    for &i in &order {
        let (v, w) = items[i];
        if w <= room {
            room -= w;
            frac += v;
        } else {
            frac += v * room / w;
            break;
        }
    }
    (chosen, frac)
}

/// Greedy by marginal value per unit of `weight` over `ground`, stopping at
/// the first overflow.
fn marginal_greedy(inst: &Instance, ground: &[usize], weight: impl Fn(&Task) -> f64, budget: f64, seed: &[usize]) -> Vec<usize> {
    let mut set: Vec<usize> = seed.to_vec();
    let mut used: f64 = seed.iter().map(|&i| weight(&inst.tasks[i])).sum();
    let mut left: Vec<usize> = ground.iter().copied().filter(|i| !seed.contains(i)).collect();
    while !left.is_empty() {
        let score = |i: usize| {
            let w = weight(&inst.tasks[i]);
            let g = marginal_value(inst, &set, i);
            if w == 0.0 {
                f64::INFINITY
            } else {
                g / w
            }
        };
        let (k, _) = left
            .iter()
            .enumerate()
            .map(|(k, &i)| (k, score(i)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let i = left[k];
        let w = weight(&inst.tasks[i]);
        if used + w > budget || marginal_value(inst, &set, i) <= 0.0 {
            break;
        }
        used += w;
        set.push(i);
        left.remove(k);
    }
    set.sort_unstable();
    set
}

/// Cost-benefit greedy under a cost budget, or the best affordable
/// singleton if that is worth more.
///
/// This simple rule is weaker than partial enumeration: it guarantees a
/// `(1 − 1/e)/2` fraction of the optimum rather than `1 − 1/e`.
pub fn submodular_greedy(inst: &Instance, budget: f64) -> Result<TaskSet, MechanismError> {
    if inst.valuation.is_additive() {
        return Err(MechanismError::AdditiveValuation);
    }
    let ground: Vec<usize> = (0..inst.n()).collect();
    Ok(submodular_greedy_on(inst, &ground, |t| t.cost, budget))
}

fn submodular_greedy_on(inst: &Instance, ground: &[usize], weight: impl Fn(&Task) -> f64 + Copy, budget: f64) -> TaskSet {
    let greedy = marginal_greedy(inst, ground, weight, budget, &[]);
    let single = ground
        .iter()
        .copied()
        .filter(|&i| weight(&inst.tasks[i]) <= budget)
        .map(|i| (i, value_of(inst, &[i])))
        .fold(None, |best: Option<(usize, f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        });
    match single {
        Some((i, v)) if v > value_of(inst, &greedy) => TaskSet::singleton(i),
        _ => greedy.into_iter().collect(),
    }
}

/// Greedy over `ground` by value per unit of `weight` with budget.
fn greedy_subset(inst: &Instance, ground: &[usize], weight: impl Fn(&Task) -> f64 + Copy, budget: f64) -> TaskSet {
    match inst.valuation {
        Valuation::Additive => {
            let items: Vec<(f64, f64)> = ground.iter().map(|&i| (inst.tasks[i].value, weight(&inst.tasks[i]))).collect();
            knapsack_greedy(&items, budget).0.iter().map(|k| ground[k]).collect()
        }
        Valuation::Coverage { .. } => submodular_greedy_on(inst, ground, weight, budget),
    }
}

/// Tasks of `ground` picked for the truncated rule: greedy by value per
/// cost with total cost at most 3/2.
pub fn recommend_truncated(inst: &Instance) -> TaskSet {
    let ground: Vec<usize> = (0..inst.n()).collect();
    greedy_subset(inst, &ground, |t| t.cost, TRUNCATED_COST_BUDGET)
}

/// Inflated truncated rule (cap 11, scale 9/8) on the truncated
/// recommendation.
pub fn build_truncated_mechanism(inst: &Instance, cap: f64) -> Mechanism {
    let rec = recommend_truncated(inst);
    let rule = build_truncated_separate(&inst.tasks, &rec, cap, TRUNCATED_SCALE);
    Mechanism::new(ScoringRule::TruncatedSeparate(rule), rec, Provenance::manual("truncated"))
}

/// The unit-budget truncated mechanism on `ground`: costs are inflated by
/// the cap 11, the cap-11 mechanism is built on them, and every score is
/// divided by 11 again.
pub fn scaled_truncated_mechanism(inst: &Instance, ground: &TaskSet) -> Mechanism {
    let scaled: Vec<Task> = inst
        .tasks
        .iter()
        .map(|t| Task { cost: t.cost * TRUNCATED_CAP, ..*t })
        .collect();
    let view = Instance { tasks: scaled, ..inst.clone() };
    let ids: Vec<usize> = ground.iter().collect();
    let rec = greedy_subset(&view, &ids, |t| t.cost, TRUNCATED_COST_BUDGET);
    let rule = build_truncated_separate(&view.tasks, &rec, TRUNCATED_CAP, TRUNCATED_SCALE).scaled(1.0 / TRUNCATED_CAP);
    Mechanism::new(
        ScoringRule::TruncatedSeparate(rule),
        rec,
        Provenance::case("truncated_scaled", CaseLabel::X, Some("costs and scores scaled by the cap 11")),
    )
}

/// `1 − 2c/p + p`: how much revelation probability a threshold-1 rule can
/// spend while keeping this task worth its cost.
pub fn pivotal_budget(t: &Task) -> f64 {
    1.0 - t.min_budget() + t.prob
}

/// Whether every task keeps a nonnegative marginal under the threshold-1
/// rule on `set`: `Π_{i ∈ set∖{i'}} (1 − p_i) · p_{i'}/2 ≥ c_{i'}`.
pub fn threshold_ic_condition(inst: &Instance, set: &TaskSet) -> bool {
    set.iter().all(|k| {
        let others: f64 = set.iter().filter(|&i| i != k).map(|i| 1.0 - inst.tasks[i].prob).product();
        let t = &inst.tasks[k];
        others * t.prob / 2.0 >= t.cost - crate::tol::IC
    })
}

/// Threshold-rule recommendation over `ground`: for each candidate pivot
/// `j`, tasks whose pivotal budget is at least `j`'s are added greedily by
/// value per probability while the total probability (including `j`) stays
/// within `j`'s pivotal budget; the pair `{j, most valuable}` is also
/// considered when it passes [`threshold_ic_condition`]. The most valuable
/// candidate wins.
pub fn recommend_threshold_static(ground: &TaskSet, inst: &Instance) -> TaskSet {
    let mut best: Option<(TaskSet, f64)> = None;
    for j in ground.iter() {
        let key_j = pivotal_budget(&inst.tasks[j]);
        let g: Vec<usize> = ground.iter().filter(|&i| pivotal_budget(&inst.tasks[i]) >= key_j).collect();
        let psi: TaskSet = marginal_greedy(inst, &g, |t| t.prob, key_j, &[j]).into_iter().collect();
        let star = g
            .iter()
            .copied()
            .map(|i| (i, value_of(inst, &[i])))
            .fold((j, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b })
            .0;
        let pair = TaskSet::new([j, star]);
        let alt = if threshold_ic_condition(inst, &pair) { pair } else { TaskSet::singleton(star) };
        for cand in [psi, alt] {
            let v = value_of(inst, cand.as_slice());
            if best.as_ref().map_or(true, |b| v > b.1) {
                best = Some((cand, v));
            }
        }
    }
    best.map(|b| b.0).unwrap_or_default()
}

/// Greedy by value per probability with total probability at most 0.55.
pub fn recommend_threshold_sequential(ground: &TaskSet, inst: &Instance) -> TaskSet {
    let ids: Vec<usize> = ground.iter().collect();
    greedy_subset(inst, &ids, |t| t.prob, SEQUENTIAL_PROB_BUDGET)
}

fn classify_static(t: &Task) -> CaseLabel {
    let r = t.reveal_ratio();
    if r > 11.0 {
        CaseLabel::X
    } else if r > 16.0 / 15.0 {
        CaseLabel::Y3
    } else if t.prob >= 0.25 {
        CaseLabel::Y1
    } else {
        CaseLabel::Y2
    }
}

fn classify_sequential(t: &Task) -> CaseLabel {
    if t.reveal_ratio() > 11.0 {
        CaseLabel::X
    } else if t.prob >= 0.1 {
        CaseLabel::Y1seq
    } else {
        CaseLabel::Y2seq
    }
}

fn partition_by(inst: &Instance, labels: &[CaseLabel], f: fn(&Task) -> CaseLabel) -> BTreeMap<CaseLabel, TaskSet> {
    let mut out: BTreeMap<CaseLabel, TaskSet> = labels.iter().map(|&l| (l, TaskSet::empty())).collect();
    for t in &inst.tasks {
        out.get_mut(&f(t)).expect("label in partition").insert(t.id);
    }
    out
}

/// Static case split of a preprocessed instance.
pub fn partition_static(inst: &Instance) -> BTreeMap<CaseLabel, TaskSet> {
    partition_by(inst, &CaseLabel::STATIC, classify_static)
}

/// Sequential case split of a preprocessed instance.
pub fn partition_sequential(inst: &Instance) -> BTreeMap<CaseLabel, TaskSet> {
    partition_by(inst, &CaseLabel::SEQUENTIAL, classify_sequential)
}

fn best_singleton(inst: &Instance, ground: &TaskSet) -> Option<usize> {
    ground
        .iter()
        .map(|i| (i, value_of(inst, &[i])))
        .fold(None, |b: Option<(usize, f64)>, c| match b {
            Some(b) if b.1 >= c.1 => Some(b),
            _ => Some(c),
        })
        .map(|b| b.0)
}

fn threshold_mechanism(rec: TaskSet, provenance: Provenance) -> Mechanism {
    Mechanism::new(ScoringRule::Threshold(ThresholdRule::new(rec.clone(), 1)), rec, provenance)
}

/// Outcome of a best-of pipeline, in original task ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub mechanism: Mechanism,
    pub value: f64,
    pub case_sizes: BTreeMap<CaseLabel, usize>,
    /// Value of every case candidate, in label order.
    pub candidates: Vec<(CaseLabel, f64)>,
}

fn certify(pre: &Instance, mech: &mut Mechanism, analytic: &str) -> Result<(), MechanismError> {
    if mech.recommendation.len() <= STRUCTURED_MAX {
        let rep = agent::verify_ic(pre, mech)?;
        if !rep.holds {
            return Err(MechanismError::NotIncentiveCompatible(format!(
                "{}: gap {:e} against effort {}",
                mech.provenance.procedure, rep.gap, rep.worst_deviation.effort
            )));
        }
        mech.certificate = Certificate::Oracle { gap: rep.gap };
    } else {
        mech.certificate = Certificate::Analytic { condition: analytic.to_string() };
    }
    Ok(())
}

fn pick_best(pre: &Instance, inst: &Instance, cands: Vec<(CaseLabel, Mechanism)>, parts: &BTreeMap<CaseLabel, TaskSet>) -> Solution {
    let candidates: Vec<(CaseLabel, f64)> = cands.iter().map(|(l, m)| (*l, m.value(pre))).collect();
    let best = cands
        .into_iter()
        .map(|(_, m)| m)
        .fold(None, |b: Option<Mechanism>, m| match b {
            Some(b) if b.value(pre) >= m.value(pre) => Some(b),
            _ => Some(m),
        })
        .unwrap_or_else(|| Mechanism::empty("empty"));
    let map: Vec<usize> = (0..pre.n()).map(|i| pre.original_id(i)).collect();
    let mechanism = best.remap(&map);
    let value = mechanism.value(inst);
    Solution {
        mechanism,
        value,
        case_sizes: parts.iter().map(|(l, s)| (*l, s.len())).collect(),
        candidates,
    }
}

/// Best of the per-case mechanisms for a best-responding agent: truncated
/// (unit cap, scaled) on X, the most valuable singleton with its
/// budget-minimal rule on Y1, and threshold-1 rules on Y2 and Y3.
/// Candidates are verified by the exact oracle when small enough.
pub fn best_of_static(inst: &Instance) -> Result<Solution, MechanismError> {
    let pre = preprocess(inst);
    let parts = partition_static(&pre);
    let mut cands = Vec::new();
    for (&label, ground) in &parts {
        if ground.is_empty() {
            continue;
        }
        let mut mech = match label {
            CaseLabel::X => scaled_truncated_mechanism(&pre, ground),
            CaseLabel::Y1 => {
                let i = best_singleton(&pre, ground).expect("nonempty ground");
                let rule = single_budget_minimal(&pre.tasks[i]).expect("preprocessed task fits the budget");
                Mechanism::new(ScoringRule::Single(rule), TaskSet::singleton(i), Provenance::case("singleton", label, None))
            }
            _ => threshold_mechanism(recommend_threshold_static(ground, &pre), Provenance::case("threshold_static", label, None)),
        };
        let condition = match label {
            CaseLabel::X => "recommendation cost at most 3/22 under the inflated cap",
            CaseLabel::Y1 => "budget-minimal single-task rule",
            _ => "product-form marginal condition of the threshold-1 rule",
        };
        certify(&pre, &mut mech, condition)?;
        cands.push((label, mech));
    }
    Ok(pick_best(&pre, inst, cands, &parts))
}

/// Best of the per-case mechanisms for a sequential agent: truncated on X,
/// a threshold-1 singleton on Y1seq, and the threshold-1 rule on the
/// probability-budget recommendation on Y2seq.
pub fn best_of_sequential(inst: &Instance) -> Result<Solution, MechanismError> {
    let pre = preprocess(inst);
    let parts = partition_sequential(&pre);
    let mut cands = Vec::new();
    for (&label, ground) in &parts {
        if ground.is_empty() {
            continue;
        }
        let mech = match label {
            CaseLabel::X => {
                let mut m = scaled_truncated_mechanism(&pre, ground);
                certify(&pre, &mut m, "recommendation cost at most 3/22 under the inflated cap")?;
                m
            }
            CaseLabel::Y1seq => {
                let i = best_singleton(&pre, ground).expect("nonempty ground");
                let mut m = threshold_mechanism(TaskSet::singleton(i), Provenance::case("threshold_singleton", label, None));
                certify(&pre, &mut m, "single task with 2c <= p")?;
                m
            }
            _ => {
                let mut m = threshold_mechanism(
                    recommend_threshold_sequential(ground, &pre),
                    Provenance::case("threshold_sequential", label, Some("total probability at most 0.55")),
                );
                m.certificate = Certificate::Sequential;
                m
            }
        };
        cands.push((label, mech));
    }
    Ok(pick_best(&pre, inst, cands, &parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knapsack_examples() {
        let items = [(4.0, 0.5), (3.0, 0.5), (2.0, 0.5), (1.0, 0.5)];
        let (s, frac) = knapsack_greedy(&items, 1.5);
        assert_eq!(s, TaskSet::new([0, 1, 2]));
        assert_eq!(frac, 9.0);
        assert!(knapsack_greedy(&items, 0.4).0.is_empty());
        assert_eq!(knapsack_greedy(&[(1.0, 1.0)], 1.0).0, TaskSet::singleton(0));
    }

    #[test]
    fn submodular_examples() {
        let inst = Instance::new(
            vec![Task::new(0, 0.9, 1.0, 0.0), Task::new(1, 0.1, 1.0, 0.0)],
            Valuation::Coverage { universe_weights: vec![10.0], covers: vec![vec![0], vec![0]] },
            1.0,
        )
        .unwrap();
        assert_eq!(submodular_greedy(&inst, 1.0).unwrap(), TaskSet::singleton(1));
        let add = Instance::additive(&[(0.1, 0.5, 1.0)]).unwrap();
        assert_eq!(submodular_greedy(&add, 1.0), Err(MechanismError::AdditiveValuation));
    }

    #[test]
    fn truncated_recommendations() {
        let inst = Instance::additive(&[(0.5, 1.0, 4.0), (0.5, 1.0, 3.0), (0.5, 1.0, 2.0), (0.5, 1.0, 1.0)]).unwrap();
        assert_eq!(recommend_truncated(&inst), TaskSet::new([0, 1, 2]));
        let small = Instance::additive(&[(0.1, 0.5, 1.0), (0.2, 0.5, 1.0)]).unwrap();
        assert_eq!(recommend_truncated(&small), TaskSet::full(2));
        let m = build_truncated_mechanism(&Instance::additive(&[(0.1, 0.5, 1.0)]).unwrap(), 11.0);
        let ScoringRule::TruncatedSeparate(r) = &m.rule else { panic!() };
        assert!((r.shift + 5.275).abs() < 1e-12);
    }

    #[test]
    fn scaled_x_case_scores() {
        let inst = Instance::additive(&[(0.01, 0.8, 1.0)]).unwrap();
        let m = scaled_truncated_mechanism(&inst, &TaskSet::singleton(0));
        let ScoringRule::TruncatedSeparate(r) = &m.rule else { panic!() };
        assert!((r.per_task[0].score_bot - 9.0 / 8.0 * 0.11 / 0.8 / 11.0).abs() < 1e-15);
        assert!((r.per_task[0].score_bot - 0.014_06).abs() < 1e-5);
        assert!((r.cap - 1.0).abs() < 1e-15);
        let empty = scaled_truncated_mechanism(&inst, &TaskSet::empty());
        assert!(empty.recommendation.is_empty());
    }

    #[test]
    fn threshold_static_examples() {
        let inst = Instance::symmetric(4, 0.1, 0.048, 1.0).unwrap();
        let rec = recommend_threshold_static(&TaskSet::full(4), &inst);
        assert_eq!(rec.len(), 1);
        assert_eq!(recommend_threshold_static(&TaskSet::singleton(2), &inst), TaskSet::singleton(2));
        // 1 − 2c/p + p = 0.3 with p = 0.05.
        let c = (1.0 - 0.3 + 0.05) * 0.05 / 2.0;
        let pair = Instance::symmetric(2, 0.05, c, 1.0).unwrap();
        assert_eq!(recommend_threshold_static(&TaskSet::full(2), &pair), TaskSet::full(2));
    }

    #[test]
    fn sequential_recommendation() {
        let inst = Instance::symmetric(8, 0.09, 0.01, 1.0).unwrap();
        assert_eq!(recommend_threshold_sequential(&TaskSet::full(8), &inst).len(), 6);
        assert!(recommend_threshold_sequential(&TaskSet::empty(), &inst).is_empty());
        let one = Instance::symmetric(1, 0.09, 0.01, 1.0).unwrap();
        assert_eq!(recommend_threshold_sequential(&TaskSet::full(1), &one), TaskSet::singleton(0));
    }

    #[test]
    fn partition_examples() {
        let inst = Instance::additive(&[(0.01, 0.8, 1.0), (0.145, 0.3, 1.0), (0.048, 0.1, 1.0), (0.1, 0.5, 1.0)]).unwrap();
        let p = partition_static(&inst);
        assert_eq!(p[&CaseLabel::X], TaskSet::singleton(0));
        assert_eq!(p[&CaseLabel::Y1], TaskSet::singleton(1));
        assert_eq!(p[&CaseLabel::Y2], TaskSet::singleton(2));
        assert_eq!(p[&CaseLabel::Y3], TaskSet::singleton(3));
    }

    #[test]
    fn pipelines_on_pure_cases() {
        let y1 = Instance::additive(&[(0.145, 0.3, 1.0), (0.2, 0.4, 3.0), (0.15, 0.3, 2.0)]).unwrap();
        let sol = best_of_static(&y1).unwrap();
        assert_eq!(sol.mechanism.recommendation, TaskSet::singleton(1));
        assert_eq!(sol.value, 3.0);

        let empty = Instance::additive(&[]).unwrap();
        assert_eq!(best_of_static(&empty).unwrap().value, 0.0);
        assert_eq!(best_of_sequential(&empty).unwrap().value, 0.0);

        let small_p = Instance::symmetric(4, 0.05, 0.02, 1.0).unwrap();
        let sol = best_of_sequential(&small_p).unwrap();
        assert!(matches!(sol.mechanism.rule, ScoringRule::Threshold(_)));
        assert_eq!(sol.mechanism.recommendation.len(), 4);
    }

    #[test]
    fn remap_to_original_ids() {
        let inst = Instance::additive(&[(0.3, 0.5, 9.0), (0.01, 0.8, 1.0)]).unwrap();
        let sol = best_of_static(&inst).unwrap();
        assert_eq!(sol.mechanism.recommendation, TaskSet::singleton(1));
        assert!(agent::verify_ic(&inst, &sol.mechanism).unwrap().holds);
    }

    #[test]
    fn mechanism_document_shape() {
        let m = threshold_mechanism(TaskSet::new([0, 1]), Provenance::manual("t"));
        let j = serde_json::to_value(&m).unwrap();
        assert_eq!(j["kind"], "threshold");
        assert_eq!(j["recommendation"], serde_json::json!([0, 1]));
        let back: Mechanism = serde_json::from_value(j).unwrap();
        assert_eq!(back.rule, m.rule);
    }
}
