//! Shared generators and independent enumeration oracles for the
//! integration tests. Nothing here calls the evaluators it is compared
//! against.
#![allow(dead_code)]

use kscore::model::{Instance, Task, TaskSet, Valuation};
use kscore::scoring::{ThresholdRule, TruncatedSeparateRule};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random task with `2c ≤ p`; the reveal ratio `p/(2c)` is drawn on a log
/// scale from `[1, 40]` so every case label is reachable.
pub fn incentivizable_task(rng: &mut ChaCha8Rng, id: usize) -> Task {
    let p: f64 = rng.gen_range(0.02..=1.0);
    let r: f64 = (rng.gen_range(0.0..=40f64.ln())).exp();
    let v: f64 = rng.gen_range(0.1..=1.0);
    Task::new(id, p / (2.0 * r), p, v)
}

pub fn random_preprocessed(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let tasks = (0..n).map(|i| incentivizable_task(rng, i)).collect();
    Instance::new(tasks, Valuation::Additive, 1.0).unwrap()
}

/// Like [`random_preprocessed`], but roughly one task in five has
/// `2c > p`.
pub fn random_raw(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let tasks = (0..n)
        .map(|i| {
            if rng.gen_bool(0.2) {
                let p: f64 = rng.gen_range(0.05..=1.0);
                Task::new(i, p / 2.0 * rng.gen_range(1.05..3.0), p, rng.gen_range(0.1..=1.0))
            } else {
                incentivizable_task(rng, i)
            }
        })
        .collect();
    Instance::new(tasks, Valuation::Additive, 1.0).unwrap()
}

pub fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> TaskSet {
    (0..n).filter(|_| rng.gen_bool(0.5)).collect()
}

/// Expected threshold score under truthful reporting, by enumerating which
/// effort tasks reveal their state.
pub fn threshold_by_reveal_patterns(rule: &ThresholdRule, effort: &TaskSet, probs: &[f64]) -> f64 {
    let tasks: Vec<usize> = effort.iter().filter(|&i| rule.support.contains(i)).collect();
    let mut total = 0.0;
    for mask in 0u64..(1 << tasks.len()) {
        let mut q = 1.0;
        let mut k = 0i32;
        for (b, &i) in tasks.iter().enumerate() {
            if mask >> b & 1 == 1 {
                q *= probs[i];
                k += 1;
            } else {
                q *= 1.0 - probs[i];
            }
        }
        let score = rule.cap * 2f64.powi(k - rule.threshold as i32).min(1.0);
        total += q * score;
    }
    total
}

/// Expected truncated score `E[clamp(Σ S_i − shift, 0, cap)]` by enumerating per-task results
/// (wrong / bot / correct) with their probabilities.
pub fn truncated_by_results(rule: &TruncatedSeparateRule, tasks: &[Task], effort: &TaskSet, guess: &TaskSet) -> f64 {
    let per: Vec<Vec<(f64, f64)>> = rule
        .per_task
        .iter()
        .map(|s| {
            let p = tasks[s.task].prob;
            let e = effort.contains(s.task);
            let g = guess.contains(s.task);
            let mut out = Vec::new();
            let (w, b, c) = match (e, g) {
                (true, true) => ((1.0 - p) / 2.0, 0.0, p + (1.0 - p) / 2.0),
                (true, false) => (0.0, 1.0 - p, p),
                (false, true) => (0.5, 0.0, 0.5),
                (false, false) => (0.0, 1.0, 0.0),
            };
            for (q, x) in [(w, s.score_wrong), (b, s.score_bot), (c, s.score_correct)] {
                if q > 0.0 {
                    out.push((q, x));
                }
            }
            out
        })
        .collect();
    let mut total = 0.0;
    let mut idx = vec![0usize; per.len()];
    loop {
        let mut q = 1.0;
        let mut sum = -rule.shift;
        for (t, &k) in idx.iter().enumerate() {
            q *= per[t][k].0;
            sum += per[t][k].1;
        }
        total += q * sum.clamp(0.0, rule.cap);
        let mut t = 0;
        loop {
            if t == idx.len() {
                return total;
            }
            idx[t] += 1;
            if idx[t] < per[t].len() {
                break;
            }
            idx[t] = 0;
            t += 1;
        }
    }
}
