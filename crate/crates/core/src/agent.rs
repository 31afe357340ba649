//! Agent-side oracles: expected utility, exact best responses, IC
//! verification and the sequential-effort simulator.
//!
//! Structured rules are searched over effort subsets of the rule's domain
//! times per-task `{Truthful, GuessOnBot}` policies; effort outside the
//! domain only adds cost and is never part of a best response. Tabular
//! rules are searched over every deterministic per-task reporting map.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanisms::Mechanism;
use crate::model::{enumerate_effort_outcomes, value_of, Instance, Outcome, Signal, SignalProfile, TaskSet};
use crate::scoring::{
    clamped_sum_expectation, posterior_of, Lottery, ScoringError, ScoringRule, SingleTaskRule, TabularRule,
    TruncatedSeparateRule,
};
use crate::tol;

/// Largest structured-rule domain searched by [`best_response`].
pub const STRUCTURED_MAX: usize = 14;
/// Largest `n` for tabular best responses (27 maps per task).
pub const TABULAR_BR_MAX: usize = 3;
/// Largest `n` for tabular expected-utility evaluation.
pub const TABULAR_EVAL_MAX: usize = 6;
/// Largest recommendation set for [`sequential_simulate`].
pub const SEQUENTIAL_MAX: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("size limit exceeded for {what}: {n} > {max}")]
    SizeLimit { what: &'static str, n: usize, max: usize },
    #[error("rule/instance mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// What the agent reports on one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportAction {
    Truthful,
    /// Report a fair coin instead of `Bot` when uninformed.
    GuessOnBot,
    /// Report `map[received.digit()]`.
    Map([Signal; 3]),
}

impl ReportAction {
    pub const IDENTITY: [Signal; 3] = [Signal::Bot, Signal::Zero, Signal::One];

    fn lottery(self, p: f64) -> Lottery {
        match self {
            ReportAction::Truthful => Lottery::effort(p, false),
            ReportAction::GuessOnBot => Lottery::effort(p, true),
            ReportAction::Map(m) => Lottery::from_map(p, &m),
        }
    }

    /// Distribution over reported signals given the received one.
    fn reports(self, received: Signal) -> [(Signal, f64); 2] {
        match (self, received) {
            (ReportAction::Truthful, s) => [(s, 1.0), (s, 0.0)],
            (ReportAction::GuessOnBot, Signal::Bot) => [(Signal::Zero, 0.5), (Signal::One, 0.5)],
            (ReportAction::GuessOnBot, s) => [(s, 1.0), (s, 0.0)],
            (ReportAction::Map(m), s) => [(m[s.digit()], 1.0), (s, 0.0)],
        }
    }
}

/// Per-task reporting actions, indexed by task id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReportPolicy(pub Vec<ReportAction>);

impl ReportPolicy {
    pub fn truthful(n: usize) -> Self {
        ReportPolicy(vec![ReportAction::Truthful; n])
    }

    /// Guess on the tasks in `guess`, truthful elsewhere.
    pub fn guessing(n: usize, guess: &TaskSet) -> Self {
        ReportPolicy(
            (0..n)
                .map(|i| if guess.contains(i) { ReportAction::GuessOnBot } else { ReportAction::Truthful })
                .collect(),
        )
    }

    pub fn is_truthful(&self) -> bool {
        self.0.iter().all(|a| match a {
            ReportAction::Truthful => true,
            ReportAction::Map(m) => *m == ReportAction::IDENTITY,
            ReportAction::GuessOnBot => false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub effort: TaskSet,
    pub policy: ReportPolicy,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub effort: TaskSet,
    pub policy: ReportPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    pub holds: bool,
    /// Best-response utility minus the utility of following the
    /// recommendation truthfully (0 when IC).
    pub gap: f64,
    pub worst_deviation: Deviation,
    pub recommended_utility: f64,
    /// Tabular rules only: whether truthful reporting is optimal at every
    /// received profile.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proper: Option<bool>,
}

fn check_rule(inst: &Instance, rule: &ScoringRule) -> Result<(), AgentError> {
    match rule {
        ScoringRule::Tabular(t) if t.n != inst.n() => Err(AgentError::Mismatch(format!(
            "tabular rule over {} tasks, instance has {}",
            t.n,
            inst.n()
        ))),
        _ => match rule.domain() {
            Some(d) if d.iter().any(|i| i >= inst.n()) => {
                Err(AgentError::Mismatch(format!("rule scores tasks {d} outside the instance")))
            }
            _ => Ok(()),
        },
    }
}

/// Expected score for effort on `effort` under `policy`.
pub fn expected_score(
    inst: &Instance,
    rule: &ScoringRule,
    effort: &TaskSet,
    policy: &ReportPolicy,
) -> Result<f64, AgentError> {
    check_rule(inst, rule)?;
    let n = inst.n();
    if policy.0.len() != n {
        return Err(AgentError::Mismatch(format!("policy covers {} tasks, instance has {n}", policy.0.len())));
    }
    match rule {
        ScoringRule::Tabular(t) => {
            if n > TABULAR_EVAL_MAX {
                return Err(AgentError::SizeLimit { what: "tabular evaluation", n, max: TABULAR_EVAL_MAX });
            }
            Ok(tabular_expected(inst, t, effort, policy))
        }
        _ => {
            let lot: Vec<Lottery> = inst
                .tasks
                .iter()
                .map(|t| policy.0[t.id].lottery(if effort.contains(t.id) { t.prob } else { 0.0 }))
                .collect();
            Ok(rule.expected_from_lotteries(&lot))
        }
    }
}

/// Expected score minus the cost of `effort`.
pub fn expected_utility(
    inst: &Instance,
    rule: &ScoringRule,
    effort: &TaskSet,
    policy: &ReportPolicy,
) -> Result<f64, AgentError> {
    Ok(expected_score(inst, rule, effort, policy)? - inst.total_cost(effort))
}

/// Joint probability of (received profile, outcome) under effort,
/// indexed like a tabular rule.
fn received_weights(inst: &Instance, effort: &TaskSet) -> Vec<(SignalProfile, Outcome, f64)> {
    let n = inst.n();
    let w0 = 0.5f64.powi(n as i32);
    let mut out = Vec::new();
    for (sym, q) in enumerate_effort_outcomes(inst, effort).expect("effort within instance") {
        for omega in Outcome::all(n) {
            let sigma = sym.realize(&omega);
            out.push((sigma, omega, q * w0));
        }
    }
    out
}

fn tabular_expected(inst: &Instance, rule: &TabularRule, effort: &TaskSet, policy: &ReportPolicy) -> f64 {
    let n = inst.n();
    let mut total = 0.0;
    for (sigma, omega, w) in received_weights(inst, effort) {
        let mut reports = vec![(Vec::with_capacity(n), 1.0)];
        for i in 0..n {
            let opts = policy.0[i].reports(sigma.0[i]);
            reports = reports
                .into_iter()
                .flat_map(|(r, q): (Vec<Signal>, f64)| {
                    opts.iter().filter(|o| o.1 > 0.0).map(move |&(s, qs)| {
                        let mut r2 = r.clone();
                        r2.push(s);
                        (r2, q * qs)
                    })
                })
                .collect();
        }
        for (r, q) in reports {
            total += w * q * rule.score(&SignalProfile(r), &omega);
        }
    }
    total
}

/// Subsets of `ground` in tie-break order: by size, then lexicographic.
pub fn subsets_in_order(ground: &TaskSet) -> Vec<TaskSet> {
    let ids = ground.as_slice();
    let mut all: Vec<TaskSet> = (0..1u64 << ids.len()).map(|m| TaskSet::from_submask(ids, m)).collect();
    all.sort_by(|a, b| a.tie_order(b));
    all
}

/// Exact best response. Ties within [`tol::IC`] of the maximum go to the
/// smallest effort set (then lexicographic), then to the first policy in
/// enumeration order, truthful first.
pub fn best_response(inst: &Instance, rule: &ScoringRule) -> Result<BestResponse, AgentError> {
    check_rule(inst, rule)?;
    match rule {
        ScoringRule::Threshold(_) => threshold_best_response(inst, rule),
        ScoringRule::TruncatedSeparate(r) => separate_best_response(inst, r),
        ScoringRule::Single(r) => separate_best_response(inst, &single_as_separate(r)),
        ScoringRule::Tabular(t) => tabular_best_response(inst, t),
    }
}

fn single_as_separate(r: &SingleTaskRule) -> TruncatedSeparateRule {
    TruncatedSeparateRule {
        per_task: vec![*r],
        shift: 0.0,
        cap: f64::INFINITY,
        scale: 1.0,
    }
}

fn domain_checked(rule: &ScoringRule) -> Result<TaskSet, AgentError> {
    let d = rule.domain().expect("structured rule");
    if d.len() > STRUCTURED_MAX {
        return Err(AgentError::SizeLimit { what: "structured best response", n: d.len(), max: STRUCTURED_MAX });
    }
    Ok(d)
}

fn threshold_best_response(inst: &Instance, rule: &ScoringRule) -> Result<BestResponse, AgentError> {
    // Guessing on Bot never beats reporting Bot here: half of the next
    // payout level is at most the current one.
    let d = domain_checked(rule)?;
    let n = inst.n();
    let truthful = ReportPolicy::truthful(n);
    let efforts = subsets_in_order(&d);
    let utils: Vec<f64> = efforts
        .iter()
        .map(|e| expected_utility(inst, rule, e, &truthful))
        .collect::<Result<_, _>>()?;
    let max = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k = utils.iter().position(|&u| u >= max - tol::IC).expect("nonempty");
    Ok(BestResponse { effort: efforts[k].clone(), policy: truthful, utility: utils[k] })
}

struct SeparateSearch<'a> {
    inst: &'a Instance,
    rule: &'a TruncatedSeparateRule,
    /// A guess is a mean-preserving spread of the task's score.
    spread: bool,
}

impl SeparateSearch<'_> {
    fn terms(&self, effort: &TaskSet, guess: &TaskSet) -> Vec<[(f64, f64); 3]> {
        self.rule
            .per_task
            .iter()
            .map(|r| {
                let p = if effort.contains(r.task) { self.inst.tasks[r.task].prob } else { 0.0 };
                let l = Lottery::effort(p, guess.contains(r.task));
                [(r.score_wrong, l.wrong), (r.score_bot, l.bot), (r.score_correct, l.correct)]
            })
            .collect()
    }

    fn utility(&self, effort: &TaskSet, guess: &TaskSet) -> f64 {
        clamped_sum_expectation(&self.terms(effort, guess), self.rule.shift, self.rule.cap) - self.inst.total_cost(effort)
    }

    /// `(utility with no guessing, upper bound over all guess sets)`.
    ///
    /// Adding guesses spreads the sum, which raises both clamp tails. The
    /// bound combines the largest low tail (guess everywhere) with the
    /// smallest high tail (no guess); without the spread property it is
    /// infinite.
    fn bracket(&self, effort: &TaskSet, domain: &TaskSet) -> (f64, f64) {
        let plain = self.utility(effort, &TaskSet::empty());
        if !self.spread {
            return (plain, f64::INFINITY);
        }
        let shift = self.rule.shift;
        let mean = |t: &[[(f64, f64); 3]]| t.iter().map(|x| x.iter().map(|(v, q)| v * q).sum::<f64>()).sum::<f64>() - shift;
        let none = self.terms(effort, &TaskSet::empty());
        let all = self.terms(effort, domain);
        // E[clamp] − E[Y] = low − high for each guess set.
        let low_all = clamped_sum_expectation(&all, shift, f64::INFINITY) - mean(&all);
        let low_none = clamped_sum_expectation(&none, shift, f64::INFINITY) - mean(&none);
        (plain, (plain + low_all - low_none).max(plain))
    }
}

fn separate_best_response(inst: &Instance, rule: &TruncatedSeparateRule) -> Result<BestResponse, AgentError> {
    let d = domain_checked(&ScoringRule::TruncatedSeparate(rule.clone()))?;
    let spread = rule
        .per_task
        .iter()
        .all(|r| (r.score_correct + r.score_wrong - 2.0 * r.score_bot).abs() <= tol::KEY);
    let search = SeparateSearch { inst, rule, spread };
    let efforts = subsets_in_order(&d);
    let guesses = subsets_in_order(&d);
    let brackets: Vec<(f64, f64)> = efforts.iter().map(|e| search.bracket(e, &d)).collect();

    // Pass 1: the maximum.
    let mut max = brackets.iter().map(|b| b.0).fold(f64::NEG_INFINITY, f64::max);
    for (e, &(plain, ub)) in efforts.iter().zip(&brackets) {
        if ub <= max || ub <= plain {
            continue;
        }
        for g in guesses.iter().skip(1) {
            max = max.max(search.utility(e, g));
        }
    }
    // Pass 2: the first candidate within tolerance of it.
    for (e, &(plain, ub)) in efforts.iter().zip(&brackets) {
        if plain >= max - tol::IC {
            return Ok(BestResponse { effort: e.clone(), policy: ReportPolicy::truthful(inst.n()), utility: plain });
        }
        if ub < max - tol::IC {
            continue;
        }
        for g in guesses.iter().skip(1) {
            let u = search.utility(e, g);
            if u >= max - tol::IC {
                return Ok(BestResponse { effort: e.clone(), policy: ReportPolicy::guessing(inst.n(), g), utility: u });
            }
        }
    }
    unreachable!("the maximum is attained by some candidate")
}

/// All 27 deterministic maps, identity first, then lexicographic.
fn all_maps() -> Vec<[Signal; 3]> {
    let mut maps = vec![ReportAction::IDENTITY];
    for a in Signal::ALL {
        for b in Signal::ALL {
            for c in Signal::ALL {
                let m = [a, b, c];
                if m != ReportAction::IDENTITY {
                    maps.push(m);
                }
            }
        }
    }
    maps
}

fn tabular_best_response(inst: &Instance, rule: &TabularRule) -> Result<BestResponse, AgentError> {
    let n = inst.n();
    if n > TABULAR_BR_MAX {
        return Err(AgentError::SizeLimit { what: "tabular best response", n, max: TABULAR_BR_MAX });
    }
    let maps = all_maps();
    // Without effort only the Bot entry of a map is ever used.
    let bot_maps: Vec<[Signal; 3]> = maps
        .iter()
        .copied()
        .filter(|m| m[1] == Signal::Zero && m[2] == Signal::One)
        .collect();
    let mut candidates: Vec<(TaskSet, Vec<[Signal; 3]>, f64)> = Vec::new();
    for effort in subsets_in_order(&TaskSet::full(n)) {
        let weights: Vec<(SignalProfile, Outcome, f64)> =
            received_weights(inst, &effort).into_iter().filter(|w| w.2 > 0.0).collect();
        let choices: Vec<&Vec<[Signal; 3]>> =
            (0..n).map(|i| if effort.contains(i) { &maps } else { &bot_maps }).collect();
        let cost = inst.total_cost(&effort);
        let total: usize = choices.iter().map(|c| c.len()).product();
        for code in 0..total {
            // Mixed-radix decode, last task fastest.
            let mut rest = code;
            let mut current = vec![ReportAction::IDENTITY; n];
            for i in (0..n).rev() {
                current[i] = choices[i][rest % choices[i].len()];
                rest /= choices[i].len();
            }
            let score: f64 = weights
                .iter()
                .map(|(sigma, omega, w)| {
                    let reported =
                        SignalProfile(sigma.0.iter().zip(&current).map(|(s, m)| m[s.digit()]).collect());
                    w * rule.score(&reported, omega)
                })
                .sum();
            candidates.push((effort.clone(), current, score - cost));
        }
    }
    let max = candidates.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    let (effort, maps, utility) = candidates.into_iter().find(|c| c.2 >= max - tol::IC).expect("nonempty");
    Ok(BestResponse {
        effort,
        policy: ReportPolicy(maps.into_iter().map(ReportAction::Map).collect()),
        utility,
    })
}

/// Largest gain from misreporting at any received profile, with the worst
/// profile (`0` when truthful reporting is optimal everywhere).
pub fn tabular_properness_gap(rule: &TabularRule) -> (f64, SignalProfile) {
    let n = rule.n;
    let mut worst = (0.0, SignalProfile::all_bot(n));
    for sigma in SignalProfile::enumerate_lex(n) {
        let post = posterior_of(&sigma);
        let value = |r: &SignalProfile| -> f64 {
            let base = r.index() << n;
            post.iter().enumerate().map(|(w, &b)| b * rule.table[base + w]).sum()
        };
        let truthful = value(&sigma);
        let best = SignalProfile::enumerate_lex(n).iter().map(value).fold(f64::NEG_INFINITY, f64::max);
        if best - truthful > worst.0 {
            worst = (best - truthful, sigma);
        }
    }
    worst
}

/// Checks that effort on exactly the recommendation with truthful reports
/// is a best response.
pub fn verify_ic(inst: &Instance, mech: &Mechanism) -> Result<IcReport, AgentError> {
    verify_ic_parts(inst, &mech.rule, &mech.recommendation)
}

/// [`verify_ic`] on a bare rule and recommendation set.
pub fn verify_ic_parts(inst: &Instance, rule: &ScoringRule, rec: &TaskSet) -> Result<IcReport, AgentError> {
    let br = best_response(inst, rule)?;
    let rec_u = expected_utility(inst, rule, rec, &ReportPolicy::truthful(inst.n()))?;
    let gap = (br.utility - rec_u).max(0.0);
    let proper = match rule {
        ScoringRule::Tabular(t) => Some(tabular_properness_gap(t).0 <= tol::IC),
        _ => None,
    };
    Ok(IcReport {
        holds: gap <= tol::IC && proper.unwrap_or(true),
        gap,
        worst_deviation: Deviation { effort: br.effort, policy: br.policy },
        recommended_utility: rec_u,
        proper,
    })
}

/// Drops `dropped` from a tabular rule by simulating its signals: the new
/// score averages the old one over the signals effort on `dropped` would
/// have produced, so the agent's problem on the remaining tasks is
/// unchanged.
pub fn simulate_dropped_tasks(inst: &Instance, rule: &TabularRule, dropped: &TaskSet) -> Result<TabularRule, AgentError> {
    if rule.n != inst.n() {
        return Err(AgentError::Mismatch("tabular rule size differs from instance".into()));
    }
    let sims = enumerate_effort_outcomes(inst, dropped).map_err(|e| AgentError::Mismatch(e.to_string()))?;
    Ok(TabularRule::from_fn(rule.n, rule.cap, |sigma, omega| {
        sims.iter()
            .map(|(sym, q)| {
                let realized = sym.realize(omega);
                let mixed = SignalProfile(
                    (0..sigma.len())
                        .map(|i| if dropped.contains(i) { realized.0[i] } else { sigma.0[i] })
                        .collect(),
                );
                q * rule.score(&mixed, omega)
            })
            .sum()
    })?)
}

// ---------------------------------------------------------------------------
// Sequential effort
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Next task: the largest positive one-step marginal utility.
    EagerMarginal,
    /// Next task: the first in `order` with positive marginal utility.
    FixedOrderGreedy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequentialStrategy {
    pub kind: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
}

impl SequentialStrategy {
    pub fn eager() -> Self {
        SequentialStrategy { kind: StrategyKind::EagerMarginal, order: None }
    }

    pub fn fixed_order(order: Vec<usize>) -> Self {
        SequentialStrategy { kind: StrategyKind::FixedOrderGreedy, order: Some(order) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialResult {
    /// Probability of each final completed set.
    pub completion_distribution: Vec<(TaskSet, f64)>,
    pub expected_value: f64,
    /// Probability that every recommended task is completed.
    pub completion_prob_all: f64,
    /// Probability that every recommended task is completed and none of
    /// them produced an informative signal.
    pub completion_prob_all_uninformed: f64,
}

/// Sequential decision: continue with a task, or stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqAction {
    Effort(usize),
    Stop,
}

/// One decision point: signals received so far (in order) and the action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub history: Vec<(usize, Signal)>,
    pub action: SeqAction,
}

struct SeqModel<'a> {
    inst: &'a Instance,
    rule: &'a ScoringRule,
    rec: Vec<usize>,
}

impl<'a> SeqModel<'a> {
    fn new(inst: &'a Instance, mech: &'a Mechanism) -> Result<Self, AgentError> {
        check_rule(inst, &mech.rule)?;
        let rec: Vec<usize> = mech.recommendation.iter().collect();
        if rec.len() > SEQUENTIAL_MAX {
            return Err(AgentError::SizeLimit { what: "sequential simulation", n: rec.len(), max: SEQUENTIAL_MAX });
        }
        if let Some(&bad) = rec.iter().find(|&&i| i >= inst.n()) {
            return Err(AgentError::Mismatch(format!("recommended task {bad} outside the instance")));
        }
        if let ScoringRule::Tabular(_) = mech.rule {
            if inst.n() > TABULAR_EVAL_MAX {
                return Err(AgentError::SizeLimit { what: "tabular evaluation", n: inst.n(), max: TABULAR_EVAL_MAX });
            }
        }
        Ok(SeqModel { inst, rule: &mech.rule, rec })
    }

    /// Possible signals from effort on task `i` with their probabilities.
    /// Structured rules only see whether a report is informative, so the
    /// revealed value is represented by `One`.
    fn branches(&self, i: usize) -> Vec<(Signal, f64)> {
        let p = self.inst.tasks[i].prob;
        let mut out = Vec::with_capacity(3);
        if self.rule.is_tabular() {
            out.push((Signal::Zero, p / 2.0));
            out.push((Signal::One, p / 2.0));
        } else {
            out.push((Signal::One, p));
        }
        if p < 1.0 {
            out.push((Signal::Bot, 1.0 - p));
        }
        out
    }

    /// Expected score from stopping now and reporting optimally.
    fn stop_value(&self, received: &SignalProfile) -> f64 {
        match self.rule {
            ScoringRule::Threshold(_) => {
                // Guessing is weakly dominated (see the static best response).
                let lot: Vec<Lottery> = (0..received.len())
                    .map(|i| if received.0[i].is_informative() { Lottery::CORRECT } else { Lottery::BOT })
                    .collect();
                self.rule.expected_from_lotteries(&lot)
            }
            ScoringRule::Single(r) => {
                if received.0[r.task].is_informative() {
                    r.score_correct
                } else {
                    r.score_bot.max((r.score_correct + r.score_wrong) / 2.0)
                }
            }
            ScoringRule::TruncatedSeparate(r) => truncated_stop_value(r, received),
            ScoringRule::Tabular(t) => {
                let post = posterior_of(received);
                let n = t.n;
                SignalProfile::enumerate_lex(n)
                    .iter()
                    .map(|s| {
                        let base = s.index() << n;
                        post.iter().enumerate().map(|(w, &b)| b * t.table[base + w]).sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    fn marginal(&self, received: &SignalProfile, now: f64, i: usize) -> f64 {
        let mut next = received.clone();
        let mut v = 0.0;
        for (s, q) in self.branches(i) {
            next.0[i] = s;
            v += q * self.stop_value(&next);
        }
        v - self.inst.tasks[i].cost - now
    }

    fn choose(&self, strat: &SequentialStrategy, received: &SignalProfile, done: &TaskSet) -> SeqAction {
        let now = self.stop_value(received);
        match strat.kind {
            StrategyKind::EagerMarginal => {
                let mut best: Option<(usize, f64)> = None;
                for &i in self.rec.iter().filter(|&&i| !done.contains(i)) {
                    let m = self.marginal(received, now, i);
                    if m > tol::IC && best.map_or(true, |(_, bm)| m > bm) {
                        best = Some((i, m));
                    }
                }
                best.map_or(SeqAction::Stop, |(i, _)| SeqAction::Effort(i))
            }
            StrategyKind::FixedOrderGreedy => {
                let order = strat.order.clone().unwrap_or_else(|| self.rec.clone());
                order
                    .iter()
                    .filter(|&&i| self.rec.contains(&i) && !done.contains(i))
                    .find(|&&i| self.marginal(received, now, i) > tol::IC)
                    .map_or(SeqAction::Stop, |&i| SeqAction::Effort(i))
            }
        }
    }
}

/// Truncated separate rules: the optimal end-of-search report.
///
/// With per-task scores satisfying `correct + wrong = 2·bot`, a guess is a
/// symmetric spread around the truthful sum `s`. When `s ≥ cap/2` the upper
/// clamp is at least as close as the lower one, so no guess set can beat
/// `clamp(s)`; otherwise guess sets are enumerated.
fn truncated_stop_value(r: &TruncatedSeparateRule, received: &SignalProfile) -> f64 {
    let s: f64 = r
        .per_task
        .iter()
        .map(|t| if received.0[t.task].is_informative() { t.score_correct } else { t.score_bot })
        .sum::<f64>()
        - r.shift;
    let spread = r
        .per_task
        .iter()
        .all(|t| (t.score_correct + t.score_wrong - 2.0 * t.score_bot).abs() <= tol::KEY);
    if spread && s >= r.cap / 2.0 {
        return s.clamp(0.0, r.cap);
    }
    let uninformed: Vec<usize> = r
        .per_task
        .iter()
        .enumerate()
        .filter(|(_, t)| !received.0[t.task].is_informative())
        .map(|(k, _)| k)
        .collect();
    let mut best = f64::NEG_INFINITY;
    for mask in 0..1u64 << uninformed.len() {
        let terms: Vec<[(f64, f64); 3]> = r
            .per_task
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let l = if received.0[t.task].is_informative() {
                    Lottery::CORRECT
                } else if uninformed.iter().position(|&u| u == k).map_or(false, |j| mask >> j & 1 == 1) {
                    Lottery::COIN
                } else {
                    Lottery::BOT
                };
                [(t.score_wrong, l.wrong), (t.score_bot, l.bot), (t.score_correct, l.correct)]
            })
            .collect();
        best = best.max(clamped_sum_expectation(&terms, r.shift, r.cap));
    }
    best
}

/// Exact distribution of the completed set under a sequential strategy,
/// by depth-first enumeration of signal branches.
pub fn sequential_simulate(
    inst: &Instance,
    mech: &Mechanism,
    strat: &SequentialStrategy,
) -> Result<SequentialResult, AgentError> {
    let model = SeqModel::new(inst, mech)?;
    let mut dist: BTreeMap<TaskSet, f64> = BTreeMap::new();
    let mut uninformed_all = 0.0;
    let full: TaskSet = model.rec.iter().copied().collect();
    let mut stack = vec![(SignalProfile::all_bot(inst.n()), TaskSet::empty(), 1.0f64, true)];
    while let Some((received, done, q, clean)) = stack.pop() {
        match model.choose(strat, &received, &done) {
            SeqAction::Stop => {
                *dist.entry(done.clone()).or_insert(0.0) += q;
                if clean && done == full {
                    uninformed_all += q;
                }
            }
            SeqAction::Effort(i) => {
                for (s, w) in model.branches(i) {
                    let mut next = received.clone();
                    next.0[i] = s;
                    stack.push((next, done.with(i), q * w, clean && s == Signal::Bot));
                }
            }
        }
    }
    let expected_value = dist.iter().map(|(s, q)| q * value_of(inst, s.as_slice())).sum();
    let completion_prob_all = dist.get(&full).copied().unwrap_or(0.0);
    Ok(SequentialResult {
        completion_distribution: dist.into_iter().collect(),
        expected_value,
        completion_prob_all,
        completion_prob_all_uninformed: uninformed_all,
    })
}

/// Every decision point reachable under the strategy, in depth-first order.
pub fn sequential_trace(
    inst: &Instance,
    mech: &Mechanism,
    strat: &SequentialStrategy,
) -> Result<Vec<TraceStep>, AgentError> {
    let model = SeqModel::new(inst, mech)?;
    let mut out = Vec::new();
    let mut stack = vec![(SignalProfile::all_bot(inst.n()), TaskSet::empty(), Vec::new())];
    while let Some((received, done, history)) = stack.pop() {
        let action = model.choose(strat, &received, &done);
        out.push(TraceStep { history: history.clone(), action });
        if let SeqAction::Effort(i) = action {
            for (s, _) in model.branches(i) {
                let mut next = received.clone();
                next.0[i] = s;
                let mut h = history.clone();
                h.push((i, s));
                stack.push((next, done.with(i), h));
            }
        }
    }
    Ok(out)
}

/// Whether no stop decision in `trace` leaves a recommended task with
/// positive one-step marginal utility.
pub fn check_not_obviously_dominated(trace: &[TraceStep], inst: &Instance, mech: &Mechanism) -> Result<bool, AgentError> {
    let model = SeqModel::new(inst, mech)?;
    for step in trace.iter().filter(|s| s.action == SeqAction::Stop) {
        let mut received = SignalProfile::all_bot(inst.n());
        let mut done = TaskSet::empty();
        for &(i, s) in &step.history {
            received.0[i] = s;
            done.insert(i);
        }
        let now = model.stop_value(&received);
        if model
            .rec
            .iter()
            .filter(|i| !done.contains(**i))
            .any(|&i| model.marginal(&received, now, i) > tol::IC)
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Monte-Carlo estimate of the sequential expected value:
/// `(mean, standard error)` over `paths` seeded sample paths.
pub fn sequential_monte_carlo(
    inst: &Instance,
    mech: &Mechanism,
    strat: &SequentialStrategy,
    paths: usize,
    seed: u64,
) -> Result<(f64, f64), AgentError> {
    let model = SeqModel::new(inst, mech)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..paths {
        let mut received = SignalProfile::all_bot(inst.n());
        let mut done = TaskSet::empty();
        while let SeqAction::Effort(i) = model.choose(strat, &received, &done) {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (s, w) in model.branches(i) {
                acc += w;
                if u < acc {
                    received.0[i] = s;
                    break;
                }
            }
            done.insert(i);
        }
        let v = value_of(inst, done.as_slice());
        sum += v;
        sum_sq += v * v;
    }
    let n = paths as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}
