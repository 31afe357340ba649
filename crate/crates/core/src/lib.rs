//! Scoring-rule mechanisms for incentivizing effort on many binary tasks.
//!
//! A principal recommends a set of tasks and commits to a bounded scoring
//! rule; the agent then chooses where to exert costly effort and what to
//! report. This crate constructs the classical mechanism families
//! (budget-minimal single-task, truncated separate, threshold), evaluates
//! them exactly, verifies incentive compatibility with brute-force oracles,
//! computes optimal mechanisms on tiny instances by linear programming, and
//! provides the analytic bounds used to reason about them.
//!
//! Modules are layered bottom-up:
//!
//! * [`model`]: instances, signals, outcomes, valuations.
//! * [`scoring`]: rule families and exact expected-score evaluators.
//! * [`agent`]: best responses, IC verification, sequential effort.
//! * [`optlp`]: dense simplex and LP-based optimal mechanisms.
//! * [`bounds`]: closed-form bounds and tail inequalities.
//! * [`mechanisms`]: recommendation procedures and case pipelines.
//! * [`hardness`]: the subset-sum reduction with certificate checks.
//! * [`bench`]: seeded instance generation and benchmark rows.

pub mod agent;
pub mod bench;
pub mod bounds;
pub mod hardness;
pub mod mechanisms;
pub mod model;
pub mod optlp;
pub mod scoring;

/// Numeric tolerances shared across modules.
pub mod tol {
    /// Utility and IC comparisons.
    pub const IC: f64 = 1e-9;
    /// Probability-mass checks.
    pub const MASS: f64 = 1e-12;
    /// Constraint satisfaction of LP solutions.
    pub const LP_FEAS: f64 = 1e-7;
    /// Resolution at which nearly equal score sums are merged.
    pub const KEY: f64 = 1e-12;
}

pub use agent::{BestResponse, IcReport, ReportAction, ReportPolicy, SequentialResult, SequentialStrategy};
pub use mechanisms::{CaseLabel, Mechanism};
pub use model::{Instance, Outcome, Signal, SignalProfile, Task, TaskSet, Valuation};
pub use scoring::{ScoringRule, SingleTaskRule, TabularRule, ThresholdRule, TruncatedSeparateRule};
