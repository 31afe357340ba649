//! Exact optimal mechanisms on tiny instances, by linear programming.
//!
//! The optimal-mechanism program is solved in a symmetry-reduced form.
//! Relabelling the two states of any task maps feasible rules to feasible
//! rules, and averaging over all relabellings preserves every constraint,
//! so an optimal rule may be taken to depend on each task only through
//! whether its report is wrong, `Bot`, or correct. This leaves `3^n`
//! variables instead of `6^n`. [`ic_feasible_full`] keeps the unreduced
//! program as a cross-check.

pub mod simplex;

pub use simplex::{simplex_solve, Constraint, LinearProgram, LpError, LpResult, LpStatus, Sense};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::subsets_in_order;
use crate::model::{enumerate_effort_outcomes, value_of, Instance, Outcome, Signal, SignalProfile, TaskSet};
use crate::scoring::{posterior_of, Lottery, ScoringError, TabularRule};

/// Largest instance for [`ic_opt_exact`].
pub const IC_OPT_MAX: usize = 4;
/// Largest instance for [`ic_feasible_full`].
pub const FULL_LP_MAX: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum OptError {
    #[error("size limit exceeded: n = {n} > {max}")]
    SizeLimit { n: usize, max: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcOpt {
    pub value: f64,
    pub recommendation: TaskSet,
    pub rule: TabularRule,
}

/// Per-task result index: wrong, bot, correct.
const RESULTS: usize = 3;

fn result_coeffs(lots: &[Lottery]) -> Vec<f64> {
    let mut coef = vec![1.0];
    for l in lots {
        let parts = [l.wrong, l.bot, l.correct];
        // Task i is digit i of the base-3 index, task 0 least significant.
        let stride = coef.len();
        let mut next = vec![0.0; stride * RESULTS];
        for (d, &q) in parts.iter().enumerate() {
            for (k, &c) in coef.iter().enumerate() {
                next[d * stride + k] = c * q;
            }
        }
        coef = next;
    }
    coef
}

fn effort_coeffs(inst: &Instance, effort: &TaskSet) -> Vec<f64> {
    let lots: Vec<Lottery> = inst
        .tasks
        .iter()
        .map(|t| Lottery::effort(if effort.contains(t.id) { t.prob } else { 0.0 }, false))
        .collect();
    result_coeffs(&lots)
}

fn reduced_program(inst: &Instance, rec: &TaskSet) -> LinearProgram {
    let n = inst.n();
    let vars = RESULTS.pow(n as u32);
    let mut lp = LinearProgram::new(vars);
    for j in 0..vars {
        lp.set_bounds(j, 0.0, Some(inst.budget));
    }
    // Properness: at every received profile (informative set `info`), the
    // truthful report beats every per-task deviation.
    for info in 0..1u64 << n {
        let truth: Vec<Lottery> = (0..n)
            .map(|i| if info >> i & 1 == 1 { Lottery::CORRECT } else { Lottery::BOT })
            .collect();
        let options: Vec<Vec<Lottery>> = (0..n)
            .map(|i| {
                if info >> i & 1 == 1 {
                    vec![Lottery::CORRECT, Lottery::WRONG, Lottery::BOT]
                } else {
                    vec![Lottery::BOT, Lottery::COIN]
                }
            })
            .collect();
        let truth_coef = result_coeffs(&truth);
        let total: usize = options.iter().map(|o| o.len()).product();
        for code in 1..total {
            let mut rest = code;
            let dev: Vec<Lottery> = options
                .iter()
                .map(|o| {
                    let l = o[rest % o.len()];
                    rest /= o.len();
                    l
                })
                .collect();
            let dev_coef = result_coeffs(&dev);
            let row = truth_coef.iter().zip(&dev_coef).map(|(a, b)| a - b).collect();
            lp.add(row, Sense::Ge, 0.0);
        }
    }
    // Effort: following the recommendation beats every other effort set;
    // properness makes truthful reporting optimal after any of them.
    let rec_coef = effort_coeffs(inst, rec);
    let rec_cost = inst.total_cost(rec);
    for other in subsets_in_order(&TaskSet::full(n)) {
        if &other == rec {
            continue;
        }
        let coef = effort_coeffs(inst, &other);
        let row = rec_coef.iter().zip(&coef).map(|(a, b)| a - b).collect();
        lp.add(row, Sense::Ge, rec_cost - inst.total_cost(&other));
    }
    lp
}

fn expand(n: usize, cap: f64, x: &[f64]) -> Result<TabularRule, ScoringError> {
    TabularRule::from_fn(n, cap, |sigma, omega| {
        let idx = (0..n).rev().fold(0, |acc, i| {
            let d = match sigma.0[i] {
                Signal::Bot => 1,
                s if s == Signal::from_state(omega.0[i]) => 2,
                _ => 0,
            };
            acc * RESULTS + d
        });
        x[idx].clamp(0.0, cap)
    })
}

/// A rule making `rec` incentive compatible, if one exists.
pub fn ic_feasible(inst: &Instance, rec: &TaskSet) -> Result<Option<TabularRule>, OptError> {
    let n = inst.n();
    if n > IC_OPT_MAX {
        return Err(OptError::SizeLimit { n, max: IC_OPT_MAX });
    }
    let res = simplex_solve(&reduced_program(inst, rec))?;
    match res.status {
        LpStatus::Optimal => Ok(Some(expand(n, inst.budget, &res.x)?)),
        _ => Ok(None),
    }
}

/// [`ic_feasible`] over the unreduced table `S(σ, ω)`, with properness
/// against every alternative profile.
pub fn ic_feasible_full(inst: &Instance, rec: &TaskSet) -> Result<Option<TabularRule>, OptError> {
    let n = inst.n();
    if n > FULL_LP_MAX {
        return Err(OptError::SizeLimit { n, max: FULL_LP_MAX });
    }
    let outcomes = 1usize << n;
    let profiles = 3usize.pow(n as u32);
    let vars = profiles * outcomes;
    let mut lp = LinearProgram::new(vars);
    for j in 0..vars {
        lp.set_bounds(j, 0.0, Some(inst.budget));
    }
    for si in 0..profiles {
        let post = posterior_of(&SignalProfile::from_index(si, n));
        for alt in (0..profiles).filter(|&a| a != si) {
            let mut row = vec![0.0; vars];
            for (w, &b) in post.iter().enumerate() {
                row[si * outcomes + w] += b;
                row[alt * outcomes + w] -= b;
            }
            lp.add(row, Sense::Ge, 0.0);
        }
    }
    let table_coeffs = |effort: &TaskSet| {
        let mut row = vec![0.0; vars];
        for (sym, q) in enumerate_effort_outcomes(inst, effort).expect("effort within instance") {
            for omega in Outcome::all(n) {
                let sigma = sym.realize(&omega);
                row[sigma.index() * outcomes + omega.index()] += q / outcomes as f64;
            }
        }
        row
    };
    let rec_coef = table_coeffs(rec);
    let rec_cost = inst.total_cost(rec);
    for other in subsets_in_order(&TaskSet::full(n)) {
        if &other == rec {
            continue;
        }
        let coef = table_coeffs(&other);
        let row = rec_coef.iter().zip(&coef).map(|(a, b)| a - b).collect();
        lp.add(row, Sense::Ge, rec_cost - inst.total_cost(&other));
    }
    let res = simplex_solve(&lp)?;
    match res.status {
        LpStatus::Optimal => Ok(Some(TabularRule {
            n,
            table: res.x.iter().map(|v| v.clamp(0.0, inst.budget)).collect(),
            cap: inst.budget,
        })),
        _ => Ok(None),
    }
}

/// Candidate recommendation sets in scan order: decreasing value, then
/// smaller cardinality, then lexicographic.
pub fn candidate_order(inst: &Instance) -> Vec<(TaskSet, f64)> {
    let mut all: Vec<(TaskSet, f64)> = subsets_in_order(&TaskSet::full(inst.n()))
        .into_iter()
        .map(|s| {
            let v = value_of(inst, s.as_slice());
            (s, v)
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.tie_order(&b.0)));
    all
}

/// The optimal value over all incentive-compatible mechanisms, with the
/// first optimal recommendation in scan order and a witness rule.
pub fn ic_opt_exact(inst: &Instance) -> Result<IcOpt, OptError> {
    let n = inst.n();
    if n > IC_OPT_MAX {
        return Err(OptError::SizeLimit { n, max: IC_OPT_MAX });
    }
    for (rec, value) in candidate_order(inst) {
        if let Some(rule) = ic_feasible(inst, &rec)? {
            return Ok(IcOpt { value, recommendation: rec, rule });
        }
    }
    unreachable!("the empty recommendation with the zero rule is always feasible")
}

/// Scores `s_k` over the number `k` of informative reports, all correct
/// (0 on any wrong report).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricRule {
    pub s: Vec<f64>,
}

fn binomial_pmf(l: usize, p: f64, n: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    pmf[0] = 1.0;
    for step in 0..l {
        for k in (0..=step + 1).rev() {
            let keep = pmf[k] * (1.0 - p);
            let up = if k > 0 { pmf[k - 1] * p } else { 0.0 };
            pmf[k] = keep + up;
        }
    }
    pmf
}

/// Whether effort on exactly `target` of `n` identical tasks can be
/// incentivized, with a witness.
///
/// Constraints: `s ∈ [0,1]^{n+1}`, `s_{k+1} ≥ s_k ≥ s_{k+1}/2` for
/// `0 ≤ k < n` (so guessing never pays), and effort level `target`
/// maximizes `E_{k∼Bin(l,p)}[s_k] − l·c`.
pub fn symmetric_feasible(n: usize, p: f64, c: f64, target: usize) -> Result<Option<SymmetricRule>, OptError> {
    if target > n {
        return Ok(None);
    }
    let vars = n + 1;
    let mut lp = LinearProgram::new(vars);
    for j in 0..vars {
        lp.set_bounds(j, 0.0, Some(1.0));
    }
    for k in 0..n {
        let mut row = vec![0.0; vars];
        row[k + 1] = 1.0;
        row[k] = -1.0;
        lp.add(row, Sense::Ge, 0.0);
        let mut row = vec![0.0; vars];
        row[k] = 1.0;
        row[k + 1] = -0.5;
        lp.add(row, Sense::Ge, 0.0);
    }
    let at = binomial_pmf(target, p, n);
    for l in (0..=n).filter(|&l| l != target) {
        let other = binomial_pmf(l, p, n);
        let row = at.iter().zip(&other).map(|(a, b)| a - b).collect();
        lp.add(row, Sense::Ge, (target as f64 - l as f64) * c);
    }
    let res = simplex_solve(&lp)?;
    Ok(match res.status {
        LpStatus::Optimal => Some(SymmetricRule { s: res.x }),
        _ => None,
    })
}

/// Largest incentivizable effort level on `n` identical tasks.
pub fn symmetric_max_effort(n: usize, p: f64, c: f64) -> Result<usize, OptError> {
    for target in (1..=n).rev() {
        if symmetric_feasible(n, p, c, target)?.is_some() {
            return Ok(target);
        }
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::verify_ic_parts;
    use crate::scoring::ScoringRule;

    #[test]
    fn single_task_values() {
        let ok = Instance::additive(&[(0.2, 0.5, 1.0)]).unwrap();
        assert_eq!(ic_opt_exact(&ok).unwrap().value, 1.0);
        let bad = Instance::additive(&[(0.3, 0.5, 1.0)]).unwrap();
        assert_eq!(ic_opt_exact(&bad).unwrap().value, 0.0);
    }

    #[test]
    fn two_symmetric_tasks_pinned() {
        // Pinned from the feasibility LP; both tasks cannot be incentivized.
        let inst = Instance::additive(&[(0.2, 0.5, 1.0), (0.2, 0.5, 1.0)]).unwrap();
        let opt = ic_opt_exact(&inst).unwrap();
        assert_eq!(opt.value, 1.0);
        assert_eq!(opt.recommendation, TaskSet::singleton(0));
    }

    #[test]
    fn witness_passes_oracle() {
        let inst = Instance::additive(&[(0.05, 0.5, 1.0), (0.1, 0.4, 2.0), (0.02, 0.3, 1.5)]).unwrap();
        let opt = ic_opt_exact(&inst).unwrap();
        let rep = verify_ic_parts(&inst, &ScoringRule::Tabular(opt.rule.clone()), &opt.recommendation).unwrap();
        assert!(rep.holds, "{rep:?}");
    }

    #[test]
    fn reduced_matches_full_program() {
        for &(c0, c1, p0, p1) in &[(0.2, 0.2, 0.5, 0.5), (0.1, 0.15, 0.5, 0.4), (0.05, 0.2, 0.3, 0.6), (0.24, 0.01, 0.5, 0.5)] {
            let inst = Instance::additive(&[(c0, p0, 1.0), (c1, p1, 1.0)]).unwrap();
            for rec in subsets_in_order(&TaskSet::full(2)) {
                let a = ic_feasible(&inst, &rec).unwrap().is_some();
                let b = ic_feasible_full(&inst, &rec).unwrap().is_some();
                assert_eq!(a, b, "{rec} at {:?}", (c0, c1, p0, p1));
            }
        }
    }

    #[test]
    fn symmetric_examples() {
        assert!(symmetric_feasible(3, 0.5, 0.1, 1).unwrap().is_some());
        let free = symmetric_feasible(4, 0.5, 0.0, 4).unwrap();
        assert!(free.is_some());
        assert!(symmetric_max_effort(3, 0.5, 0.1).unwrap() >= 2);
        assert_eq!(symmetric_max_effort(3, 0.5, 0.3).unwrap(), 0);
        assert_eq!(symmetric_max_effort(5, 0.3, 0.0).unwrap(), 5);
    }

    #[test]
    fn binomial_mass() {
        let pmf = binomial_pmf(3, 0.3, 5);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((pmf[1] - 3.0 * 0.3 * 0.49).abs() < 1e-15);
        assert_eq!(pmf[4], 0.0);
    }
}
