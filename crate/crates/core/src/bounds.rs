//! Upper bounds and analytic calculators.
//!
//! Logarithms are natural throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{marginal_value, Instance, Task, TaskSet};
use crate::tol;

/// Largest instance for [`alg_opt`].
pub const ALG_OPT_MAX: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("size limit exceeded: n = {n} > {max}")]
    SizeLimit { n: usize, max: usize },
    #[error("invalid posterior distribution: {0}")]
    Posterior(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    /// Whether the checked quantity respects the bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub satisfied: Option<bool>,
    pub applicable: bool,
}

impl BoundReport {
    fn new(name: &str, value: f64, satisfied: Option<bool>, applicable: bool) -> Self {
        BoundReport { name: name.to_string(), value, satisfied, applicable }
    }
}

/// Exact knapsack optimum `max v(Ψ)` subject to `Σ_{Ψ} c ≤ budget`, with
/// an optimal set.
pub fn alg_opt_set(inst: &Instance, budget: f64) -> Result<(f64, TaskSet), BoundsError> {
    let n = inst.n();
    if n > ALG_OPT_MAX {
        return Err(BoundsError::SizeLimit { n, max: ALG_OPT_MAX });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let ratio = |i: usize| {
        let t = &inst.tasks[i];
        if t.cost == 0.0 {
            f64::INFINITY
        } else {
            t.value / t.cost
        }
    };
    order.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)).then(a.cmp(&b)));
    let mut search = Knapsack {
        inst,
        order,
        budget: budget + tol::MASS,
        best: (0.0, Vec::new()),
        chosen: Vec::new(),
    };
    search.dfs(0, 0.0, 0.0);
    let (v, set) = search.best;
    Ok((v, set.into_iter().collect()))
}

pub fn alg_opt(inst: &Instance, budget: f64) -> Result<f64, BoundsError> {
    Ok(alg_opt_set(inst, budget)?.0)
}

struct Knapsack<'a> {
    inst: &'a Instance,
    order: Vec<usize>,
    budget: f64,
    best: (f64, Vec<usize>),
    chosen: Vec<usize>,
}

impl Knapsack<'_> {
    /// Optimistic completion value from position `k`: the fractional
    /// bound for additive values, the sum of fitting marginals otherwise
    /// (valid by submodularity).
    fn bound(&self, k: usize, used: f64) -> f64 {
        let mut room = self.budget - used;
        let mut extra = 0.0;
        let additive = self.inst.valuation.is_additive();
        for &i in &self.order[k..] {
            let t = &self.inst.tasks[i];
            let gain = marginal_value(self.inst, &self.chosen, i);
            if additive {
                if t.cost <= room {
                    room -= t.cost;
                    extra += gain;
                } else {
                    extra += gain * room / t.cost;
                    break;
                }
            } else if t.cost <= room {
                extra += gain;
            }
        }
        extra
    }

    fn dfs(&mut self, k: usize, used: f64, value: f64) {
        if value > self.best.0 {
            self.best = (value, self.chosen.clone());
        }
        if k == self.order.len() || value + self.bound(k, used) <= self.best.0 {
            return;
        }
        let i = self.order[k];
        let c = self.inst.tasks[i].cost;
        if used + c <= self.budget {
            let gain = marginal_value(self.inst, &self.chosen, i);
            self.chosen.push(i);
            self.dfs(k + 1, used + c, value + gain);
            self.chosen.pop();
        }
        self.dfs(k + 1, used, value);
    }
}

/// Key of the probability budget: `(16/3)(1 − 2c/p) + p`.
pub fn pivotal_key(t: &Task) -> f64 {
    16.0 / 3.0 * (1.0 - t.min_budget()) + t.prob
}

/// Cap on `Σ p` over an incentivizable set of hard tasks (`p ≤ 1/4`,
/// `2c/p ≥ 15/16`), set by the task minimizing [`pivotal_key`].
pub fn prob_budget_bound(tasks: &[Task]) -> BoundReport {
    let applicable = tasks
        .iter()
        .all(|t| t.prob <= 0.25 + tol::MASS && t.min_budget() >= 15.0 / 16.0 - tol::MASS);
    let value = tasks.iter().map(pivotal_key).fold(f64::INFINITY, f64::min);
    let total: f64 = tasks.iter().map(|t| t.prob).sum();
    BoundReport::new("prob_budget", value, Some(total <= value + tol::IC), applicable)
}

/// Cardinality cap for identical-probability tasks with `p ≤ 1/2` and
/// `c ≥ p/2.1`: `|Ψ| ≤ −3 ln(p/(2c*))/ln(1−p) + 1` with `c*` the largest
/// cost.
pub fn cardinality_bound(tasks: &[Task]) -> BoundReport {
    let Some(first) = tasks.first() else {
        return BoundReport::new("cardinality", f64::INFINITY, Some(true), false);
    };
    let p = first.prob;
    let applicable = p < 1.0
        && p <= 0.5
        && tasks.iter().all(|t| (t.prob - p).abs() <= tol::MASS && t.cost >= p / 2.1 - tol::MASS);
    let c_star = tasks.iter().map(|t| t.cost).fold(0.0, f64::max);
    let value = -3.0 * (p / (2.0 * c_star)).ln() / (1.0 - p).ln() + 1.0;
    BoundReport::new("cardinality", value, Some(tasks.len() as f64 <= value + tol::IC), applicable)
}

/// Effort-level cap for identical tasks: `−4 ln(1+ε)/ln(1−p)` with
/// `ε = p/(2c) − 1`, valid for `p ≤ 1/2` and `ε ∈ (0, 1/8)`; `+∞` and not
/// applicable elsewhere.
pub fn symmetric_effort_upper(p: f64, c: f64) -> BoundReport {
    let eps = p / (2.0 * c) - 1.0;
    if !(p <= 0.5 && eps > 0.0 && eps < 0.125) {
        return BoundReport::new("symmetric_effort", f64::INFINITY, None, false);
    }
    let value = -4.0 * (1.0 + eps).ln() / (1.0 - p).ln();
    BoundReport::new("symmetric_effort", value, None, true)
}

/// Effort level reached under the threshold-1 rule on `n` identical
/// tasks: the agent keeps going while the next task's marginal score
/// `p(1−p)^l / 2` strictly exceeds `c`.
pub fn threshold_stop_level(p: f64, c: f64, n: usize) -> usize {
    let mut l = 0;
    while l < n && p / 2.0 * (1.0 - p).powi(l as i32) - c > tol::IC {
        l += 1;
    }
    l
}

/// Posterior means and their probabilities for one task's signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDistribution {
    pub atoms: Vec<(f64, f64)>,
}

impl PosteriorDistribution {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self, BoundsError> {
        let d = PosteriorDistribution { atoms };
        d.validate()?;
        Ok(d)
    }

    /// The state is revealed with probability `p`, otherwise nothing.
    pub fn revealing(p: f64) -> Self {
        PosteriorDistribution { atoms: vec![(0.0, p / 2.0), (1.0, p / 2.0), (0.5, 1.0 - p)] }
    }

    /// Posterior mean `(1 ± p)/2` with probability 1/2 each.
    pub fn noisy(p: f64) -> Self {
        PosteriorDistribution { atoms: vec![((1.0 - p) / 2.0, 0.5), ((1.0 + p) / 2.0, 0.5)] }
    }

    pub fn uninformative() -> Self {
        PosteriorDistribution { atoms: vec![(0.5, 1.0)] }
    }

    pub fn validate(&self) -> Result<(), BoundsError> {
        let bad = |m: String| Err(BoundsError::Posterior(m));
        if let Some(a) = self.atoms.iter().find(|(mu, q)| !(0.0..=1.0).contains(mu) || *q < 0.0) {
            return bad(format!("atom out of range: {a:?}"));
        }
        let mass: f64 = self.atoms.iter().map(|a| a.1).sum();
        if (mass - 1.0).abs() > tol::IC {
            return bad(format!("probabilities sum to {mass}"));
        }
        let mean: f64 = self.atoms.iter().map(|(mu, q)| mu * q).sum();
        if (mean - 0.5).abs() > tol::IC {
            return bad(format!("mean posterior {mean} differs from the prior 1/2"));
        }
        Ok(())
    }
}

/// Expected `KL(prior ‖ posterior)`; `+∞` when a positive-mass atom is
/// certain.
pub fn kl_stat(post: &PosteriorDistribution) -> f64 {
    post.atoms
        .iter()
        .filter(|a| a.1 > 0.0)
        .map(|&(mu, q)| {
            if mu <= 0.0 || mu >= 1.0 {
                f64::INFINITY
            } else {
                -0.5 * q * (4.0 * mu * (1.0 - mu)).ln()
            }
        })
        .sum()
}

/// Cap on total cost of an incentivizable set: `sqrt(Σ Λ_i / 2)`.
pub fn pinsker_cost_bound(posts: &[PosteriorDistribution], costs: &[f64]) -> BoundReport {
    let lambda: f64 = posts.iter().map(kl_stat).sum();
    let value = (lambda / 2.0).sqrt();
    let total: f64 = costs.iter().sum();
    BoundReport::new("pinsker_cost", value, Some(total <= value + tol::IC), true)
}

/// Mean movement of the posterior, `Σ q |μ − 1/2|`; one task is
/// incentivizable alone iff this is at least its cost.
pub fn info_gain_single(post: &PosteriorDistribution) -> f64 {
    post.atoms.iter().map(|(mu, q)| q * (mu - 0.5).abs()).sum()
}

/// `P(X − E X ≥ δ) ≤ exp(−2δ² / Σ (b_i − a_i)²)`.
pub fn hoeffding(delta: f64, ranges: &[(f64, f64)]) -> f64 {
    if delta <= 0.0 {
        return 1.0;
    }
    let spread: f64 = ranges.iter().map(|(a, b)| (b - a) * (b - a)).sum();
    (-2.0 * delta * delta / spread).exp().min(1.0)
}

/// `factor · exp(−(δ²/2) / (Σ E X_i² + M/3))`, with `factor = 2` for the
/// two-sided event `|X| ≥ δ` and 1 for a single tail.
pub fn bernstein(delta: f64, variance_sum: f64, max_abs: f64, two_sided: bool) -> f64 {
    if delta <= 0.0 {
        return 1.0;
    }
    let factor = if two_sided { 2.0 } else { 1.0 };
    (factor * (-(0.5 * delta * delta) / (variance_sum + max_abs / 3.0)).exp()).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    Hoeffding,
    Bernstein,
}

/// Upper tail of the unclamped truncated-rule sum around its headroom,
/// for recommendation sets with `Σ c ≤ 3/2` under the cap-11, scale-9/8
/// rule: deviation `11 − 45/8`, variance sum `3(9/8)²`, increments
/// bounded by `9/4`. Returns the one-sided failure bound.
pub fn truncation_tail_bound() -> f64 {
    bernstein(11.0 - 45.0 / 8.0, 3.0 * (9.0f64 / 8.0).powi(2), 9.0 / 4.0, false)
}
