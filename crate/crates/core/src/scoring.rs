//! Scoring-rule families and exact expected-score evaluators.
//!
//! Structured rules (single-task, truncated separate, threshold) depend on
//! each report only through whether it is wrong, `Bot`, or correct. Because
//! task states are independent, the agent's behaviour on one task collapses
//! to a [`Lottery`] over those three results, and expected scores reduce to
//! a one-dimensional convolution. Tabular rules store an explicit table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Outcome, Signal, SignalProfile, Task, TaskSet};
use crate::tol;

/// Largest `n` accepted by the tabular conversion.
pub const TABULAR_MAX_N: usize = 6;
/// Largest `n` accepted by [`belief_proper_wrapper`].
pub const WRAPPER_MAX_N: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("task {task} is not incentivizable within the budget: 2c/p = {ratio}")]
    NotIncentivizable { task: usize, ratio: f64 },
    #[error("tabular size limit exceeded: n = {n} > {max}")]
    SizeLimit { n: usize, max: usize },
    #[error("invalid rule: {0}")]
    Invalid(String),
}

/// Separate score for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleTaskRule {
    pub task: usize,
    pub score_bot: f64,
    pub score_correct: f64,
    pub score_wrong: f64,
}

impl SingleTaskRule {
    /// Multiplies every score by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        SingleTaskRule {
            task: self.task,
            score_bot: self.score_bot * factor,
            score_correct: self.score_correct * factor,
            score_wrong: self.score_wrong * factor,
        }
    }

    pub fn score(&self, report: Signal, state: bool) -> f64 {
        match report {
            Signal::Bot => self.score_bot,
            r if r == Signal::from_state(state) => self.score_correct,
            _ => self.score_wrong,
        }
    }

    fn values(&self) -> [f64; 3] {
        [self.score_wrong, self.score_bot, self.score_correct]
    }
}

/// `clamp(Σ_i S_i − shift, 0, cap)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSeparateRule {
    pub per_task: Vec<SingleTaskRule>,
    pub shift: f64,
    pub cap: f64,
    pub scale: f64,
}

impl TruncatedSeparateRule {
    /// The rule paying 0 everywhere.
    pub fn zero() -> Self {
        TruncatedSeparateRule {
            per_task: Vec::new(),
            shift: 0.0,
            cap: 1.0,
            scale: 1.0,
        }
    }

    /// Multiplies every realized score by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        TruncatedSeparateRule {
            per_task: self.per_task.iter().map(|r| r.scaled(factor)).collect(),
            shift: self.shift * factor,
            cap: self.cap * factor,
            scale: self.scale * factor,
        }
    }

    pub fn tasks(&self) -> TaskSet {
        self.per_task.iter().map(|r| r.task).collect()
    }

    fn raw_sum(&self, sigma: &SignalProfile, omega: &Outcome) -> f64 {
        self.per_task
            .iter()
            .map(|r| r.score(sigma.0[r.task], omega.0[r.task]))
            .sum::<f64>()
            - self.shift
    }
}

/// Pays `cap` once `threshold` informative reports on `support` are correct,
/// `cap · 2^{k−η}` for `k < η` correct ones, and 0 as soon as any
/// informative report on `support` is wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub support: TaskSet,
    pub threshold: u32,
    pub cap: f64,
}

impl ThresholdRule {
    pub fn new(support: TaskSet, threshold: u32) -> Self {
        ThresholdRule { support, threshold, cap: 1.0 }
    }

    fn payout(&self, correct: usize) -> f64 {
        let eta = self.threshold as i32;
        let k = correct as i32;
        if k >= eta {
            self.cap
        } else {
            self.cap * 2f64.powi(k - eta)
        }
    }
}

/// Explicit table over `(σ, ω)`.
///
/// Entry `(σ, ω)` lives at `σ.index() · 2^n + ω.index()`, where `σ.index()`
/// reads the profile as base-3 digits (`Bot = 0, Zero = 1, One = 2`) and
/// `ω.index()` as bits, task 0 least significant in both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularRule {
    pub n: usize,
    pub table: Vec<f64>,
    pub cap: f64,
}

impl TabularRule {
    pub fn from_fn<F: FnMut(&SignalProfile, &Outcome) -> f64>(
        n: usize,
        cap: f64,
        mut f: F,
    ) -> Result<Self, ScoringError> {
        if n > TABULAR_MAX_N {
            return Err(ScoringError::SizeLimit { n, max: TABULAR_MAX_N });
        }
        let outcomes = 1usize << n;
        let mut table = vec![0.0; 3usize.pow(n as u32) * outcomes];
        for si in 0..3usize.pow(n as u32) {
            let sigma = SignalProfile::from_index(si, n);
            for oi in 0..outcomes {
                table[si * outcomes + oi] = f(&sigma, &Outcome::from_index(oi, n));
            }
        }
        Ok(TabularRule { n, table, cap })
    }

    pub fn score(&self, sigma: &SignalProfile, omega: &Outcome) -> f64 {
        self.table[sigma.index() * (1 << self.n) + omega.index()]
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        let want = 3usize.pow(self.n as u32) << self.n;
        if self.table.len() != want {
            return Err(ScoringError::Invalid(format!(
                "table has {} entries, expected {want}",
                self.table.len()
            )));
        }
        if let Some(s) = self.table.iter().find(|&&s| !(s >= -tol::IC && s <= self.cap + tol::IC)) {
            return Err(ScoringError::Invalid(format!("score {s} outside [0, {}]", self.cap)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoringRule {
    Threshold(ThresholdRule),
    TruncatedSeparate(TruncatedSeparateRule),
    Single(SingleTaskRule),
    Tabular(TabularRule),
}

impl ScoringRule {
    pub fn zero() -> Self {
        ScoringRule::TruncatedSeparate(TruncatedSeparateRule::zero())
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self, ScoringRule::Tabular(_))
    }

    /// Tasks whose reports can change the score (`None` for tabular rules,
    /// which may depend on everything).
    pub fn domain(&self) -> Option<TaskSet> {
        match self {
            ScoringRule::Threshold(r) => Some(r.support.clone()),
            ScoringRule::TruncatedSeparate(r) => Some(r.tasks()),
            ScoringRule::Single(r) => Some(TaskSet::singleton(r.task)),
            ScoringRule::Tabular(_) => None,
        }
    }

    /// Upper end of the score range.
    pub fn cap(&self) -> f64 {
        match self {
            ScoringRule::Threshold(r) => r.cap,
            ScoringRule::TruncatedSeparate(r) => r.cap,
            ScoringRule::Single(r) => r.score_correct.max(r.score_bot).max(r.score_wrong).max(1.0),
            ScoringRule::Tabular(r) => r.cap,
        }
    }

    /// Realized score `S(σ, ω)`.
    pub fn score(&self, sigma: &SignalProfile, omega: &Outcome) -> f64 {
        match self {
            ScoringRule::Threshold(r) => {
                let mut correct = 0;
                for i in r.support.iter() {
                    match sigma.0[i] {
                        Signal::Bot => {}
                        s if s == Signal::from_state(omega.0[i]) => correct += 1,
                        _ => return 0.0,
                    }
                }
                r.payout(correct)
            }
            ScoringRule::TruncatedSeparate(r) => r.raw_sum(sigma, omega).clamp(0.0, r.cap),
            ScoringRule::Single(r) => r.score(sigma.0[r.task], omega.0[r.task]),
            ScoringRule::Tabular(r) => r.score(sigma, omega),
        }
    }

    /// Expected score when task `i` independently produces `lotteries[i]`.
    /// `lotteries` must cover every task of the rule's domain.
    ///
    /// # Panics
    /// On tabular rules, whose score is not a function of per-task results.
    pub fn expected_from_lotteries(&self, lotteries: &[Lottery]) -> f64 {
        match self {
            ScoringRule::Threshold(r) => threshold_expectation(r, lotteries),
            ScoringRule::TruncatedSeparate(r) => {
                let terms: Vec<[(f64, f64); 3]> =
                    r.per_task.iter().map(|t| terms_of(t, &lotteries[t.task])).collect();
                clamped_sum_expectation(&terms, r.shift, r.cap)
            }
            ScoringRule::Single(r) => {
                let l = &lotteries[r.task];
                l.wrong * r.score_wrong + l.bot * r.score_bot + l.correct * r.score_correct
            }
            ScoringRule::Tabular(_) => panic!("tabular rules are evaluated by enumeration"),
        }
    }
}

/// Distribution of one task's report relative to its state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lottery {
    pub wrong: f64,
    pub bot: f64,
    pub correct: f64,
}

impl Lottery {
    pub const BOT: Lottery = Lottery { wrong: 0.0, bot: 1.0, correct: 0.0 };
    pub const CORRECT: Lottery = Lottery { wrong: 0.0, bot: 0.0, correct: 1.0 };
    pub const WRONG: Lottery = Lottery { wrong: 1.0, bot: 0.0, correct: 0.0 };
    pub const COIN: Lottery = Lottery { wrong: 0.5, bot: 0.0, correct: 0.5 };

    /// Effort with revelation probability `p` (use `p = 0` for no effort),
    /// reporting informative signals truthfully and either `Bot` or a fair
    /// guess when uninformed.
    pub fn effort(p: f64, guess: bool) -> Self {
        if guess {
            Lottery {
                wrong: (1.0 - p) / 2.0,
                bot: 0.0,
                correct: p + (1.0 - p) / 2.0,
            }
        } else {
            Lottery { wrong: 0.0, bot: 1.0 - p, correct: p }
        }
    }

    /// Result distribution of a deterministic reporting map
    /// (`map[received.digit()]` is reported).
    pub fn from_map(p: f64, map: &[Signal; 3]) -> Self {
        let mut l = Lottery { wrong: 0.0, bot: 0.0, correct: 0.0 };
        let mut add = |mass: f64, report: Signal, state: bool| match report {
            Signal::Bot => l.bot += mass,
            r if r == Signal::from_state(state) => l.correct += mass,
            _ => l.wrong += mass,
        };
        // Each state has prior 1/2; a Bot signal leaves it at 1/2.
        add(p / 2.0, map[Signal::Zero.digit()], false);
        add(p / 2.0, map[Signal::One.digit()], true);
        add((1.0 - p) / 2.0, map[Signal::Bot.digit()], false);
        add((1.0 - p) / 2.0, map[Signal::Bot.digit()], true);
        l
    }

    pub fn total(&self) -> f64 {
        self.wrong + self.bot + self.correct
    }
}

fn terms_of(rule: &SingleTaskRule, lot: &Lottery) -> [(f64, f64); 3] {
    let v = rule.values();
    [(v[0], lot.wrong), (v[1], lot.bot), (v[2], lot.correct)]
}

fn threshold_expectation(rule: &ThresholdRule, lotteries: &[Lottery]) -> f64 {
    // dp[k]: probability of no wrong report so far and exactly k correct.
    let mut dp = vec![1.0];
    for i in rule.support.iter() {
        let l = &lotteries[i];
        let mut next = vec![0.0; dp.len() + 1];
        for (k, &q) in dp.iter().enumerate() {
            next[k] += q * l.bot;
            next[k + 1] += q * l.correct;
        }
        dp = next;
    }
    dp.iter().enumerate().map(|(k, &q)| q * rule.payout(k)).sum()
}

/// Probability-weighted support points, sorted, with sums closer than
/// [`tol::KEY`] merged.
fn merge_support(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (s, q) in pts {
        if q == 0.0 {
            continue;
        }
        match out.last_mut() {
            Some(last) if (s - last.0).abs() <= tol::KEY => last.1 += q,
            _ => out.push((s, q)),
        }
    }
    out
}

/// `E[clamp(Σ_j X_j − shift, 0, cap)]` for independent discrete `X_j`.
///
/// Uses `E[clamp(Y)] = E[Y] + E[(−Y)^+] − E[(Y − cap)^+]`; partial sums that
/// cannot reach either tail whatever the remaining terms are dropped from
/// the convolution.
pub fn clamped_sum_expectation(terms: &[[(f64, f64); 3]], shift: f64, cap: f64) -> f64 {
    let mean: f64 = terms
        .iter()
        .map(|t| t.iter().map(|(v, q)| v * q).sum::<f64>())
        .sum::<f64>()
        - shift;
    let m = terms.len();
    let support = |t: &[(f64, f64); 3], pick: fn(f64, f64) -> f64, init: f64| {
        t.iter().filter(|(_, q)| *q > 0.0).fold(init, |a, (v, _)| pick(a, *v))
    };
    let mut rest_lo = vec![0.0; m + 1];
    let mut rest_hi = vec![0.0; m + 1];
    for j in (0..m).rev() {
        rest_lo[j] = rest_lo[j + 1] + support(&terms[j], f64::min, f64::INFINITY);
        rest_hi[j] = rest_hi[j + 1] + support(&terms[j], f64::max, f64::NEG_INFINITY);
    }
    let reaches_tail = |s: f64, j: usize| s + rest_lo[j] - shift < 0.0 || s + rest_hi[j] - shift > cap;

    let mut dist = if reaches_tail(0.0, 0) { vec![(0.0, 1.0)] } else { Vec::new() };
    for (j, t) in terms.iter().enumerate() {
        if dist.is_empty() {
            break;
        }
        let mut next = Vec::with_capacity(dist.len() * 3);
        for &(s, q) in &dist {
            for &(v, w) in t {
                if w > 0.0 && reaches_tail(s + v, j + 1) {
                    next.push((s + v, q * w));
                }
            }
        }
        dist = merge_support(next);
    }
    let mut low = 0.0;
    let mut high = 0.0;
    for (s, q) in dist {
        let y = s - shift;
        if y < 0.0 {
            low += q * -y;
        } else if y > cap {
            high += q * (y - cap);
        }
    }
    mean + low - high
}

/// Distribution of the unclamped shifted sum `Σ_i S_i − shift` of a
/// truncated separate rule, as sorted `(value, probability)` pairs.
pub fn untruncated_sum_distribution(rule: &TruncatedSeparateRule, lotteries: &[Lottery]) -> Vec<(f64, f64)> {
    let mut dist = vec![(-rule.shift, 1.0)];
    for t in &rule.per_task {
        let terms = terms_of(t, &lotteries[t.task]);
        let next = dist
            .iter()
            .flat_map(|&(s, q)| terms.iter().map(move |&(v, w)| (s + v, q * w)))
            .collect();
        dist = merge_support(next);
    }
    dist
}

/// The budget-minimal rule for one task: `c/p` on `Bot`, `2c/p` on a
/// correct informative report, 0 on a wrong one. The agent is exactly
/// indifferent about effort.
pub fn single_budget_minimal(task: &Task) -> Result<SingleTaskRule, ScoringError> {
    let ratio = task.min_budget();
    if ratio > 1.0 {
        return Err(ScoringError::NotIncentivizable { task: task.id, ratio });
    }
    Ok(single_rule_unchecked(task))
}

/// [`single_budget_minimal`] without the budget check.
pub fn single_rule_unchecked(task: &Task) -> SingleTaskRule {
    SingleTaskRule {
        task: task.id,
        score_bot: task.cost / task.prob,
        score_correct: 2.0 * task.cost / task.prob,
        score_wrong: 0.0,
    }
}

/// The single-task rule with the largest effort incentive that still fits
/// in `[0, budget]`: budget-minimal when affordable, otherwise `(budget/2,
/// budget, 0)`.
pub fn single_within_budget(task: &Task, budget: f64) -> SingleTaskRule {
    let r = single_rule_unchecked(task);
    if r.score_correct <= budget {
        r
    } else {
        SingleTaskRule {
            task: task.id,
            score_bot: budget / 2.0,
            score_correct: budget,
            score_wrong: 0.0,
        }
    }
}

/// Truncated separate rule over `support`: per-task scores are `scale`
/// times budget-minimal, shift `−cap/2 + scale·Σ c_i/p_i`.
pub fn build_truncated_separate(tasks: &[Task], support: &TaskSet, cap: f64, scale: f64) -> TruncatedSeparateRule {
    let per_task: Vec<SingleTaskRule> = support
        .iter()
        .map(|i| single_rule_unchecked(&tasks[i]).scaled(scale))
        .collect();
    let ratio_sum: f64 = support.iter().map(|i| tasks[i].cost / tasks[i].prob).sum();
    TruncatedSeparateRule {
        per_task,
        shift: -cap / 2.0 + scale * ratio_sum,
        cap,
        scale,
    }
}

/// Expected threshold score when effort is exerted on `effort` and the
/// agent reports optimally, `probs[i]` being task `i`'s revelation
/// probability. Guessing never helps under this rule, so this is the
/// Poisson-binomial expectation of `cap · min(1, 2^{m−η})`.
pub fn expected_score_threshold(rule: &ThresholdRule, effort: &TaskSet, probs: &[f64]) -> f64 {
    let lot: Vec<Lottery> = (0..probs.len())
        .map(|i| Lottery::effort(if effort.contains(i) { probs[i] } else { 0.0 }, false))
        .collect();
    threshold_expectation(rule, &lot)
}

/// Exact expected truncated score for effort on `effort`; tasks in `guess`
/// are guessed whenever the agent is uninformed, the rest report `Bot`.
pub fn expected_score_truncated(rule: &TruncatedSeparateRule, tasks: &[Task], effort: &TaskSet, guess: &TaskSet) -> f64 {
    let lot: Vec<Lottery> = tasks
        .iter()
        .map(|t| Lottery::effort(if effort.contains(t.id) { t.prob } else { 0.0 }, guess.contains(t.id)))
        .collect();
    ScoringRule::TruncatedSeparate(rule.clone()).expected_from_lotteries(&lot)
}

/// Explicit table of a structured rule over `n` tasks.
pub fn to_tabular(rule: &ScoringRule, n: usize) -> Result<TabularRule, ScoringError> {
    if let ScoringRule::Tabular(t) = rule {
        return Ok(t.clone());
    }
    if n > TABULAR_MAX_N {
        return Err(ScoringError::SizeLimit { n, max: TABULAR_MAX_N });
    }
    if let Some(d) = rule.domain() {
        if let Some(bad) = d.iter().find(|&i| i >= n) {
            return Err(ScoringError::Invalid(format!("rule scores task {bad} but n = {n}")));
        }
    }
    TabularRule::from_fn(n, rule.cap(), |s, w| rule.score(s, w))
}

/// Scores 1 when the prediction on the most certain task is right:
/// the task maximizing `max(μ, 1−μ)` (lowest index on ties) is predicted
/// to be 1 iff `μ > 1/2`.
pub fn max_over_separate_score(beliefs: &[f64], outcome: &Outcome) -> f64 {
    let mut best = 0;
    let mut conf = f64::NEG_INFINITY;
    for (i, &mu) in beliefs.iter().enumerate() {
        let c = mu.max(1.0 - mu);
        if c > conf {
            conf = c;
            best = i;
        }
    }
    if beliefs.is_empty() {
        return 0.0;
    }
    let predict = beliefs[best] > 0.5;
    if predict == outcome.0[best] {
        1.0
    } else {
        0.0
    }
}

/// Best report for a belief over outcomes (`belief[ω.index()]`), searched
/// exhaustively; ties within [`tol::IC`] go to the lexicographically
/// smallest profile.
pub fn belief_proper_wrapper(rule: &TabularRule, belief: &[f64]) -> Result<(SignalProfile, f64), ScoringError> {
    let n = rule.n;
    if n > WRAPPER_MAX_N {
        return Err(ScoringError::SizeLimit { n, max: WRAPPER_MAX_N });
    }
    if belief.len() != 1 << n {
        return Err(ScoringError::Invalid(format!("belief has {} atoms, expected {}", belief.len(), 1 << n)));
    }
    let mut best: Option<(SignalProfile, f64)> = None;
    for sigma in SignalProfile::enumerate_lex(n) {
        let base = sigma.index() << n;
        let v: f64 = belief.iter().enumerate().map(|(w, &b)| b * rule.table[base + w]).sum();
        if best.as_ref().map_or(true, |(_, bv)| v > bv + tol::IC) {
            best = Some((sigma, v));
        }
    }
    Ok(best.expect("at least one profile"))
}

/// Posterior over outcomes induced by a received profile.
pub fn posterior_of(sigma: &SignalProfile) -> Vec<f64> {
    Outcome::all(sigma.len()).map(|w| sigma.posterior(&w)).collect()
}
