//! Problem instances: tasks, valuations, signal/outcome spaces and
//! preprocessing.
//!
//! Every task has a hidden binary state drawn uniformly at random. Exerting
//! effort on task `i` costs `c_i` and reveals the state with probability
//! `p_i`; otherwise the agent observes the uninformative signal `Bot`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;


#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("failed to parse instance document: {0}")]
    Parse(String),
    #[error("invalid instance: {0}")]
    Validation(String),
    #[error("unknown task id {0}")]
    UnknownTask(usize),
}

/// A single task of the knapsack scoring problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub cost: f64,
    pub prob: f64,
    #[serde(default)]
    pub value: f64,
}

impl Task {
    pub fn new(id: usize, cost: f64, prob: f64, value: f64) -> Self {
        Task { id, cost, prob, value }
    }

    /// `p / (2c)`, infinite for free tasks.
    pub fn reveal_ratio(&self) -> f64 {
        if self.cost == 0.0 {
            f64::INFINITY
        } else {
            self.prob / (2.0 * self.cost)
        }
    }

    /// Budget needed to incentivize this task alone, `2c/p`.
    pub fn min_budget(&self) -> f64 {
        2.0 * self.cost / self.prob
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Valuation {
    Additive,
    Coverage {
        universe_weights: Vec<f64>,
        covers: Vec<Vec<usize>>,
    },
}

impl Valuation {
    pub fn is_additive(&self) -> bool {
        matches!(self, Valuation::Additive)
    }
}

/// A set of task ids, kept sorted and duplicate free.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskSet(Vec<usize>);

impl TaskSet {
    pub fn new<I: IntoIterator<Item = usize>>(ids: I) -> Self {
        let set: BTreeSet<usize> = ids.into_iter().collect();
        TaskSet(set.into_iter().collect())
    }

    pub fn empty() -> Self {
        TaskSet(Vec::new())
    }

    pub fn singleton(id: usize) -> Self {
        TaskSet(vec![id])
    }

    /// All ids in `0..n`.
    pub fn full(n: usize) -> Self {
        TaskSet((0..n).collect())
    }

    pub fn from_mask(mask: u64) -> Self {
        TaskSet((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    /// Subset of `ground` selected by the bits of `mask` (bit `j` picks
    /// `ground[j]`).
    pub fn from_submask(ground: &[usize], mask: u64) -> Self {
        TaskSet(
            ground
                .iter()
                .enumerate()
                .filter(|(j, _)| mask >> j & 1 == 1)
                .map(|(_, &id)| id)
                .collect(),
        )
    }

    pub fn mask(&self) -> u64 {
        self.0.iter().fold(0u64, |m, &i| m | 1u64 << i)
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn insert(&mut self, id: usize) {
        if let Err(pos) = self.0.binary_search(&id) {
            self.0.insert(pos, id);
        }
    }

    pub fn remove(&mut self, id: usize) {
        if let Ok(pos) = self.0.binary_search(&id) {
            self.0.remove(pos);
        }
    }

    pub fn with(&self, id: usize) -> Self {
        let mut s = self.clone();
        s.insert(id);
        s
    }

    pub fn without(&self, id: usize) -> Self {
        let mut s = self.clone();
        s.remove(id);
        s
    }

    pub fn union(&self, other: &TaskSet) -> Self {
        TaskSet::new(self.iter().chain(other.iter()))
    }

    pub fn intersection(&self, other: &TaskSet) -> Self {
        TaskSet(self.iter().filter(|&i| other.contains(i)).collect())
    }

    pub fn difference(&self, other: &TaskSet) -> Self {
        TaskSet(self.iter().filter(|&i| !other.contains(i)).collect())
    }

    pub fn is_subset(&self, other: &TaskSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    /// Ordering used for tie-breaking: smaller sets first, then
    /// lexicographic.
    pub fn tie_order(&self, other: &TaskSet) -> std::cmp::Ordering {
        self.len().cmp(&other.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl FromIterator<usize> for TaskSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        TaskSet::new(iter)
    }
}

impl fmt::Display for TaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Per-task reported or received signal. The derived order `Bot < Zero < One`
/// is the tie-breaking order used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Signal {
    Bot,
    Zero,
    One,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::Bot, Signal::Zero, Signal::One];

    pub fn from_state(state: bool) -> Self {
        if state {
            Signal::One
        } else {
            Signal::Zero
        }
    }

    pub fn is_informative(self) -> bool {
        self != Signal::Bot
    }

    /// Radix digit used by the tabular encoding (`Bot = 0, Zero = 1, One = 2`).
    pub fn digit(self) -> usize {
        match self {
            Signal::Bot => 0,
            Signal::Zero => 1,
            Signal::One => 2,
        }
    }

    pub fn from_digit(d: usize) -> Self {
        match d {
            0 => Signal::Bot,
            1 => Signal::Zero,
            _ => Signal::One,
        }
    }
}

/// A full signal profile `σ ∈ {0, 1, ⊥}^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalProfile(pub Vec<Signal>);

impl SignalProfile {
    pub fn all_bot(n: usize) -> Self {
        SignalProfile(vec![Signal::Bot; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Mixed-radix index, task 0 is the least significant base-3 digit.
    pub fn index(&self) -> usize {
        self.0.iter().rev().fold(0, |acc, s| acc * 3 + s.digit())
    }

    pub fn from_index(mut index: usize, n: usize) -> Self {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(Signal::from_digit(index % 3));
            index /= 3;
        }
        SignalProfile(v)
    }

    /// All `3^n` profiles in lexicographic order (`Bot < Zero < One`, task 0
    /// most significant).
    pub fn enumerate_lex(n: usize) -> Vec<SignalProfile> {
        let mut out = vec![SignalProfile(Vec::with_capacity(n))];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p| {
                    Signal::ALL.iter().map(move |&s| {
                        let mut q = p.clone();
                        q.0.push(s);
                        q
                    })
                })
                .collect();
        }
        out
    }

    /// Posterior probability of `outcome` given this profile under the
    /// uniform prior: informative coordinates are certain, `Bot` ones are
    /// fair coins.
    pub fn posterior(&self, outcome: &Outcome) -> f64 {
        let mut prob = 1.0;
        for (s, &w) in self.0.iter().zip(outcome.0.iter()) {
            match s {
                Signal::Bot => prob *= 0.5,
                Signal::Zero if w => return 0.0,
                Signal::One if !w => return 0.0,
                _ => {}
            }
        }
        prob
    }
}

/// Realized states `ω ∈ {0,1}^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Outcome(pub Vec<bool>);

impl Outcome {
    /// Bit `i` of `index` is the state of task `i`.
    pub fn from_index(index: usize, n: usize) -> Self {
        Outcome((0..n).map(|i| index >> i & 1 == 1).collect())
    }

    pub fn index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | (b as usize) << i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn all(n: usize) -> impl Iterator<Item = Outcome> {
        (0..1usize << n).map(move |k| Outcome::from_index(k, n))
    }
}

/// Signal of one task with the revealed value left symbolic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolicSignal {
    /// The signal equals the task's state.
    Revealed,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolicProfile(pub Vec<SymbolicSignal>);

impl SymbolicProfile {
    pub fn realize(&self, outcome: &Outcome) -> SignalProfile {
        SignalProfile(
            self.0
                .iter()
                .zip(outcome.0.iter())
                .map(|(s, &w)| match s {
                    SymbolicSignal::Revealed => Signal::from_state(w),
                    SymbolicSignal::Bot => Signal::Bot,
                })
                .collect(),
        )
    }

    pub fn revealed(&self) -> TaskSet {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == SymbolicSignal::Revealed)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Problem input. Task ids are `0..n` in order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    pub budget: f64,
    pub tasks: Vec<Task>,
    pub valuation: Valuation,
    /// Ids in the instance this one was derived from (set by
    /// [`preprocess`]).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub original_ids: Option<Vec<usize>>,
}

#[derive(Deserialize)]
struct InstanceDoc {
    budget: f64,
    tasks: Vec<Task>,
    valuation: Valuation,
    #[serde(default)]
    original_ids: Option<Vec<usize>>,
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = InstanceDoc::deserialize(d)?;
        let inst = Instance {
            budget: doc.budget,
            tasks: doc.tasks,
            valuation: doc.valuation,
            original_ids: doc.original_ids,
        };
        inst.validate().map_err(serde::de::Error::custom)?;
        Ok(inst)
    }
}

impl Instance {
    /// Builds and validates an instance.
    pub fn new(tasks: Vec<Task>, valuation: Valuation, budget: f64) -> Result<Self, ModelError> {
        let inst = Instance {
            budget,
            tasks,
            valuation,
            original_ids: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Additive instance with budget 1 from `(cost, prob, value)` triples.
    pub fn additive(triples: &[(f64, f64, f64)]) -> Result<Self, ModelError> {
        let tasks = triples
            .iter()
            .enumerate()
            .map(|(i, &(c, p, v))| Task::new(i, c, p, v))
            .collect();
        Instance::new(tasks, Valuation::Additive, 1.0)
    }

    /// `n` identical tasks.
    pub fn symmetric(n: usize, prob: f64, cost: f64, value: f64) -> Result<Self, ModelError> {
        Instance::additive(&vec![(cost, prob, value); n])
    }

    pub fn n(&self) -> usize {
        self.tasks.len()
    }

    pub fn task(&self, id: usize) -> Result<&Task, ModelError> {
        self.tasks.get(id).ok_or(ModelError::UnknownTask(id))
    }

    pub fn probs(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.prob).collect()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.cost).collect()
    }

    /// Original id of local task `id`.
    pub fn original_id(&self, id: usize) -> usize {
        self.original_ids.as_ref().map_or(id, |m| m[id])
    }

    pub fn total_cost(&self, set: &TaskSet) -> f64 {
        set.iter().map(|i| self.tasks[i].cost).sum()
    }

    pub fn total_prob(&self, set: &TaskSet) -> f64 {
        set.iter().map(|i| self.tasks[i].prob).sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Validation(m));
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return bad(format!("budget must be positive, got {}", self.budget));
        }
        for (k, t) in self.tasks.iter().enumerate() {
            if t.id != k {
                return bad(format!("task ids must be 0..n-1 in order; position {k} has id {}", t.id));
            }
            if !(t.prob.is_finite() && t.prob > 0.0 && t.prob <= 1.0) {
                return bad(format!("task {k}: prob out of range (0,1]: {}", t.prob));
            }
            if !(t.cost.is_finite() && t.cost >= 0.0) {
                return bad(format!("task {k}: cost must be nonnegative: {}", t.cost));
            }
            if !(t.value.is_finite() && t.value >= 0.0) {
                return bad(format!("task {k}: value must be nonnegative: {}", t.value));
            }
        }
        if let Valuation::Coverage { universe_weights, covers } = &self.valuation {
            if covers.len() != self.tasks.len() {
                return bad(format!(
                    "coverage needs one cover per task: {} covers for {} tasks",
                    covers.len(),
                    self.tasks.len()
                ));
            }
            if let Some(w) = universe_weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
                return bad(format!("universe weight must be nonnegative: {w}"));
            }
            for (k, cover) in covers.iter().enumerate() {
                if let Some(e) = cover.iter().find(|&&e| e >= universe_weights.len()) {
                    return bad(format!("task {k} covers unknown element {e}"));
                }
            }
        }
        if let Some(ids) = &self.original_ids {
            if ids.len() != self.tasks.len() {
                return bad("original_ids length differs from task count".into());
            }
        }
        Ok(())
    }

    /// Sub-instance restricted to `keep` (re-indexed, original ids kept).
    pub fn restrict(&self, keep: &TaskSet) -> Instance {
        let ids: Vec<usize> = keep.iter().collect();
        let tasks = ids
            .iter()
            .enumerate()
            .map(|(new, &old)| Task { id: new, ..self.tasks[old] })
            .collect();
        let valuation = match &self.valuation {
            Valuation::Additive => Valuation::Additive,
            Valuation::Coverage { universe_weights, covers } => Valuation::Coverage {
                universe_weights: universe_weights.clone(),
                covers: ids.iter().map(|&i| covers[i].clone()).collect(),
            },
        };
        Instance {
            budget: self.budget,
            tasks,
            valuation,
            original_ids: Some(ids.iter().map(|&i| self.original_id(i)).collect()),
        }
    }
}

/// Parses and validates an instance document.
pub fn load_instance(text: &str) -> Result<Instance, ModelError> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let inst = Instance {
        budget: doc.budget,
        tasks: doc.tasks,
        valuation: doc.valuation,
        original_ids: doc.original_ids,
    };
    inst.validate()?;
    Ok(inst)
}

/// Drops every task with `2c > p`: such a task cannot be incentivized with
/// budget 1 on its own, so by monotonicity in tasks it is never part of an
/// incentivizable set.
pub fn preprocess(inst: &Instance) -> Instance {
    let keep: TaskSet = inst
        .tasks
        .iter()
        .filter(|t| 2.0 * t.cost <= t.prob)
        .map(|t| t.id)
        .collect();
    if keep.len() == inst.n() {
        return inst.clone();
    }
    inst.restrict(&keep)
}

/// `v(set)`.
pub fn valuation_value(inst: &Instance, set: &TaskSet) -> Result<f64, ModelError> {
    if let Some(bad) = set.iter().find(|&i| i >= inst.n()) {
        return Err(ModelError::UnknownTask(bad));
    }
    Ok(value_of(inst, set.as_slice()))
}

/// `v(set)` without the id check.
pub(crate) fn value_of(inst: &Instance, set: &[usize]) -> f64 {
    match &inst.valuation {
        Valuation::Additive => set.iter().map(|&i| inst.tasks[i].value).sum(),
        Valuation::Coverage { universe_weights, covers } => {
            let mut seen = vec![false; universe_weights.len()];
            let mut total = 0.0;
            for &i in set {
                for &e in &covers[i] {
                    if !seen[e] {
                        seen[e] = true;
                        total += universe_weights[e];
                    }
                }
            }
            total
        }
    }
}

/// Marginal value `v(set ∪ {i}) − v(set)`.
pub(crate) fn marginal_value(inst: &Instance, set: &[usize], i: usize) -> f64 {
    match &inst.valuation {
        Valuation::Additive => {
            if set.contains(&i) {
                0.0
            } else {
                inst.tasks[i].value
            }
        }
        Valuation::Coverage { .. } => {
            let mut with: Vec<usize> = set.to_vec();
            if with.contains(&i) {
                return 0.0;
            }
            with.push(i);
            value_of(inst, &with) - value_of(inst, set)
        }
    }
}

/// All signal patterns arising from effort on `effort`, with their
/// probabilities. Each effort task is independently revealed (prob `p_i`)
/// or `Bot`; tasks outside `effort` are always `Bot`.
///
/// Order: lexicographic over the effort tasks in increasing id, first task
/// varying slowest, `Revealed` before `Bot`.
pub fn enumerate_effort_outcomes(
    inst: &Instance,
    effort: &TaskSet,
) -> Result<Vec<(SymbolicProfile, f64)>, ModelError> {
    if let Some(bad) = effort.iter().find(|&i| i >= inst.n()) {
        return Err(ModelError::UnknownTask(bad));
    }
    let ids: Vec<usize> = effort.iter().collect();
    let m = ids.len();
    let mut out = Vec::with_capacity(1 << m);
    for bot_mask in 0..1u64 << m {
        let mut profile = vec![SymbolicSignal::Bot; inst.n()];
        let mut prob = 1.0;
        for (j, &i) in ids.iter().enumerate() {
            let p = inst.tasks[i].prob;
            if bot_mask >> (m - 1 - j) & 1 == 1 {
                prob *= 1.0 - p;
            } else {
                profile[i] = SymbolicSignal::Revealed;
                prob *= p;
            }
        }
        out.push((SymbolicProfile(profile), prob));
    }
    Ok(out)
}
