//! Reduction from integer subset sum to the knapsack scoring problem.
//!
//! All reduction quantities are integers; the unit-budget [`Instance`] is a
//! lossy floating view obtained by dividing costs by the raw budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{self, AgentError, IcReport, STRUCTURED_MAX};
use crate::mechanisms::{Mechanism, Provenance};
use crate::model::{Instance, Task, TaskSet, Valuation};
use crate::scoring::{ScoringRule, ThresholdRule};

#[derive(Debug, Error, PartialEq)]
pub enum HardnessError {
    #[error("invalid subset-sum instance: {0}")]
    Invalid(String),
    #[error("reduction quantities overflow 128-bit integers")]
    Overflow,
    #[error("subset index {0} out of range")]
    OutOfRange(usize),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSumInstance {
    pub z: Vec<u64>,
    #[serde(rename = "Z")]
    pub target: u64,
}

impl SubsetSumInstance {
    pub fn new(z: Vec<u64>, target: u64) -> Result<Self, HardnessError> {
        let s = SubsetSumInstance { z, target };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), HardnessError> {
        if self.z.is_empty() {
            return Err(HardnessError::Invalid("no integers".into()));
        }
        if self.z.iter().any(|&x| x == 0) {
            return Err(HardnessError::Invalid("integers must be positive".into()));
        }
        let max = *self.z.iter().max().expect("nonempty");
        if self.target <= max {
            return Err(HardnessError::Invalid(format!("target {} must exceed every integer (max {max})", self.target)));
        }
        Ok(())
    }
}

/// The reduced problem: `n` original tasks with value and cost `z_i`, then
/// `2kn` filler tasks, all revealed with certainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedInstance {
    pub source: SubsetSumInstance,
    pub k: u32,
    pub filler_value: u128,
    pub filler_cost: u128,
    pub raw_budget: u128,
    pub raw_costs: Vec<u128>,
    pub raw_values: Vec<u128>,
    /// Unit-budget view: costs divided by `raw_budget`.
    pub instance: Instance,
}

impl ReducedInstance {
    pub fn n_source(&self) -> usize {
        self.source.z.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.raw_costs.len()
    }

    /// `kn`, the number of filler pairs.
    pub fn kn(&self) -> u128 {
        self.k as u128 * self.n_source() as u128
    }

    pub fn fillers(&self) -> TaskSet {
        (self.n_source()..self.n_tasks()).collect()
    }
}

fn budget_for(kn: u128, target: u128, filler_cost: u128) -> Option<u128> {
    let fill = kn.checked_mul(2)?.checked_mul(filler_cost)?;
    target.checked_add(fill)?.checked_add(1)
}

/// `2^e > x`, for any `e`.
fn pow2_exceeds(e: u128, x: u128) -> bool {
    e >= 128 || (1u128 << e) > x
}

pub fn reduce_subset_sum(ss: &SubsetSumInstance) -> Result<ReducedInstance, HardnessError> {
    ss.validate()?;
    let n = ss.z.len() as u128;
    let target = ss.target as u128;
    let filler_value = ss.z.iter().try_fold(1u128, |a, &x| a.checked_add(x as u128)).ok_or(HardnessError::Overflow)?;
    let filler_cost = 1 + *ss.z.iter().max().expect("validated") as u128;

    let mut k: u32 = 1;
    let raw_budget = loop {
        let kn = k as u128 * n;
        let b = budget_for(kn, target, filler_cost).ok_or(HardnessError::Overflow)?;
        if pow2_exceeds(kn, b) {
            break b;
        }
        k = k.checked_add(1).ok_or(HardnessError::Overflow)?;
    };

    let fillers = 2 * k as usize * ss.z.len();
    let mut raw_costs: Vec<u128> = ss.z.iter().map(|&x| x as u128).collect();
    let mut raw_values = raw_costs.clone();
    raw_costs.extend(std::iter::repeat(filler_cost).take(fillers));
    raw_values.extend(std::iter::repeat(filler_value).take(fillers));

    let tasks = raw_costs
        .iter()
        .zip(&raw_values)
        .enumerate()
        .map(|(i, (&c, &v))| Task::new(i, c as f64 / raw_budget as f64, 1.0, v as f64))
        .collect();
    let instance = Instance::new(tasks, Valuation::Additive, 1.0).map_err(|e| HardnessError::Invalid(e.to_string()))?;
    Ok(ReducedInstance {
        source: ss.clone(),
        k,
        filler_value,
        filler_cost,
        raw_budget,
        raw_costs,
        raw_values,
        instance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub valid: bool,
    pub subset_sum: u128,
    pub recommendation: TaskSet,
    /// Raw budget minus the cost of full effort on the recommendation.
    pub agent_utility: i128,
    /// `2^{-kn}` times the raw budget; a deviation with at most `|subset| + kn`
    /// tasks of effort earns at most this.
    pub small_deviation_bound: f64,
    pub small_deviation_holds: bool,
    /// Least cost of effort on at least `|subset| + kn` recommended tasks.
    pub mid_deviation_cost: u128,
    pub mid_deviation_holds: bool,
    pub principal_value: u128,
    /// Exact oracle check of the threshold mechanism, when small enough.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<IcReport>,
}

impl CertificateReport {
    pub fn all_hold(&self) -> bool {
        self.valid
            && self.agent_utility == 1
            && self.small_deviation_holds
            && self.mid_deviation_holds
            && self.oracle.as_ref().map_or(true, |r| r.holds)
    }
}

/// Threshold rule at `|Ψ|` on `Ψ = subset ∪ fillers`, paying the whole
/// (unit) budget for all-correct predictions.
pub fn certificate_mechanism(red: &ReducedInstance, subset: &TaskSet) -> Mechanism {
    let psi = subset.union(&red.fillers());
    let rule = ThresholdRule::new(psi.clone(), psi.len() as u32);
    Mechanism::new(ScoringRule::Threshold(rule), psi, Provenance::manual("subset_sum_certificate"))
}

pub fn certificate_check(red: &ReducedInstance, subset: &TaskSet) -> Result<CertificateReport, HardnessError> {
    let n = red.n_source();
    if let Some(i) = subset.iter().find(|&i| i >= n) {
        return Err(HardnessError::OutOfRange(i));
    }
    let subset_sum: u128 = subset.iter().map(|i| red.source.z[i] as u128).sum();
    let valid = subset_sum == red.source.target as u128;
    let mech = certificate_mechanism(red, subset);
    let psi = &mech.recommendation;

    let effort_cost: u128 = psi.iter().map(|i| red.raw_costs[i]).sum();
    let agent_utility = red.raw_budget as i128 - effort_cost as i128;

    let kn = red.kn();
    let small_deviation_holds = pow2_exceeds(kn, red.raw_budget);
    let small_deviation_bound = red.raw_budget as f64 * 2f64.powi(-(kn.min(2000) as i32));

    let mut costs: Vec<u128> = psi.iter().map(|i| red.raw_costs[i]).collect();
    costs.sort_unstable();
    let m = (subset.len() as u128 + kn) as usize;
    let mid_deviation_cost: u128 = costs.iter().take(m).sum();
    let mid_deviation_holds = 2 * mid_deviation_cost >= red.raw_budget;

    let principal_value: u128 = psi.iter().map(|i| red.raw_values[i]).sum();

    let oracle = if valid && red.n_tasks() <= STRUCTURED_MAX {
        Some(agent::verify_ic(&red.instance, &mech)?)
    } else {
        None
    };
    Ok(CertificateReport {
        valid,
        subset_sum,
        recommendation: psi.clone(),
        agent_utility,
        small_deviation_bound,
        small_deviation_holds: valid && small_deviation_holds,
        mid_deviation_cost,
        mid_deviation_holds: valid && mid_deviation_holds,
        principal_value,
        oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_integer_reduction() {
        let ss = SubsetSumInstance::new(vec![1, 2], 3).unwrap();
        let red = reduce_subset_sum(&ss).unwrap();
        assert_eq!((red.k, red.filler_value, red.filler_cost, red.raw_budget), (3, 4, 3, 40));
        assert_eq!(red.n_tasks(), 14);
        assert_eq!(&red.raw_costs[..2], &[1, 2]);
        assert!(red.raw_costs[2..].iter().all(|&c| c == 3));

        let rep = certificate_check(&red, &TaskSet::new([0, 1])).unwrap();
        assert!(rep.valid);
        assert_eq!(rep.agent_utility, 1);
        assert_eq!(rep.principal_value, 51);
        assert_eq!(rep.small_deviation_bound, 0.625);
        assert_eq!(rep.mid_deviation_cost, 3 + 6 * 3);
        assert!(rep.all_hold());
        assert!(rep.oracle.unwrap().holds);

        let bad = certificate_check(&red, &TaskSet::singleton(0)).unwrap();
        assert!(!bad.valid);
        assert!(!bad.all_hold());
        assert_eq!(certificate_check(&red, &TaskSet::singleton(5)), Err(HardnessError::OutOfRange(5)));
    }

    #[test]
    fn single_integer_reduction() {
        let red = reduce_subset_sum(&SubsetSumInstance { z: vec![1], target: 2 }).unwrap();
        assert_eq!((red.k, red.filler_value, red.filler_cost, red.raw_budget), (5, 2, 2, 23));
        assert_eq!(red.n_tasks(), 11);
    }

    #[test]
    fn malformed_inputs() {
        assert!(SubsetSumInstance::new(vec![3, 1], 3).is_err());
        assert!(SubsetSumInstance::new(vec![], 3).is_err());
        assert!(SubsetSumInstance::new(vec![0], 3).is_err());
        let j: SubsetSumInstance = serde_json::from_str(r#"{"z":[1,2],"Z":3}"#).unwrap();
        assert_eq!(j.target, 3);
    }
}
