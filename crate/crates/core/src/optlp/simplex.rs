//! Dense two-phase tableau simplex.
//!
//! Entering variables follow Dantzig's rule; after a run of degenerate
//! pivots the solver switches to Bland's rule, which cannot cycle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tol;

const PIVOT_EPS: f64 = 1e-10;
const DEGENERATE_STREAK: usize = 50;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `maximize objective·x` (or minimize) subject to the constraints and
/// `lower ≤ x ≤ upper`. Lower bounds must be finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub maximize: bool,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<Option<f64>>,
}

impl LinearProgram {
    /// `n` variables in `[0, ∞)` and a zero objective.
    pub fn new(n: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; n],
            maximize: true,
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![None; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { coeffs, sense, rhs });
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: Option<f64>) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    /// Largest constraint or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v);
            if let Some(u) = self.upper[j] {
                worst = worst.max(v - u);
            }
        }
        worst
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension("bounds length differs from variable count".into()));
        }
        if let Some(k) = self.constraints.iter().position(|c| c.coeffs.len() != n) {
            return Err(LpError::Dimension(format!("constraint {k} has wrong width")));
        }
        if self.lower.iter().any(|l| !l.is_finite()) {
            return Err(LpError::Dimension("lower bounds must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// Columns allowed to enter.
    active: Vec<bool>,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        self.rhs[r] /= piv;
        let prow = self.rows[r].clone();
        let prhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != 0.0 {
                for (v, p) in self.rows[i].iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                self.rhs[i] -= f * prhs;
                if self.rhs[i].abs() < 1e-13 {
                    self.rhs[i] = 0.0;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Maximizes `cost·x` from the current basic feasible solution.
    fn optimize(&mut self, cost: &[f64]) -> Result<Phase, LpError> {
        let ncols = cost.len();
        let mut streak = 0;
        for _ in 0..MAX_PIVOTS {
            let reduced = |j: usize, t: &Tableau| -> f64 {
                cost[j] - t.rows.iter().zip(&t.basis).map(|(row, &b)| cost[b] * row[j]).sum::<f64>()
            };
            let bland = streak >= DEGENERATE_STREAK;
            let mut enter = None;
            let mut best = PIVOT_EPS;
            for j in (0..ncols).filter(|&j| self.active[j]) {
                let d = reduced(j, self);
                if d > best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else {
                return Ok(Phase::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > PIVOT_EPS {
                    let ratio = self.rhs[i] / row[c];
                    let better = match leave {
                        None => true,
                        Some((l, lr)) => ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Ok(Phase::Unbounded);
            };
            streak = if ratio.abs() <= 1e-12 { streak + 1 } else { 0 };
            self.pivot(r, c);
        }
        Err(LpError::Numerical(format!("no convergence within {MAX_PIVOTS} pivots")))
    }
}

/// Solves `lp` to optimality, or reports infeasibility / unboundedness.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpResult, LpError> {
    lp.validate()?;
    let n = lp.num_vars();
    let sign = if lp.maximize { 1.0 } else { -1.0 };

    // Shift to y = x − lower ≥ 0; upper bounds become rows.
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            let shift: f64 = c.coeffs.iter().zip(&lp.lower).map(|(a, l)| a * l).sum();
            (c.coeffs.clone(), c.sense, c.rhs - shift)
        })
        .collect();
    for j in 0..n {
        if let Some(u) = lp.upper[j] {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e, Sense::Le, u - lp.lower[j]));
        }
    }
    for r in rows.iter_mut() {
        if r.2 < 0.0 {
            r.0.iter_mut().for_each(|v| *v = -*v);
            r.2 = -r.2;
            r.1 = match r.1 {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let ncols = n + n_slack + n_art;
    let art_start = n + n_slack;

    let mut t = Tableau {
        rows: Vec::with_capacity(m),
        rhs: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
        active: vec![true; ncols],
    };
    let (mut s, mut a) = (n, art_start);
    for (coeffs, sense, rhs) in rows {
        let mut row = vec![0.0; ncols];
        row[..n].copy_from_slice(&coeffs);
        match sense {
            Sense::Le => {
                row[s] = 1.0;
                t.basis.push(s);
                s += 1;
            }
            Sense::Ge => {
                row[s] = -1.0;
                s += 1;
                row[a] = 1.0;
                t.basis.push(a);
                a += 1;
            }
            Sense::Eq => {
                row[a] = 1.0;
                t.basis.push(a);
                a += 1;
            }
        }
        t.rows.push(row);
        t.rhs.push(rhs);
    }

    if n_art > 0 {
        let mut phase1 = vec![0.0; ncols];
        phase1[art_start..].iter_mut().for_each(|v| *v = -1.0);
        if let Phase::Unbounded = t.optimize(&phase1)? {
            return Err(LpError::Numerical("phase one reported unbounded".into()));
        }
        let infeas: f64 = t.basis.iter().zip(&t.rhs).filter(|(&b, _)| b >= art_start).map(|(_, v)| v).sum();
        let scale = 1.0 + t.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if infeas > 1e-9 * scale {
            return Ok(LpResult { status: LpStatus::Infeasible, objective: f64::NAN, x: Vec::new() });
        }
        // Drive remaining artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= art_start {
                match (0..art_start).find(|&j| t.rows[i][j].abs() > 1e-9) {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.remove(i);
                        t.rhs.remove(i);
                        t.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
        for j in art_start..ncols {
            t.active[j] = false;
        }
    }

    let mut cost = vec![0.0; ncols];
    for j in 0..n {
        cost[j] = sign * lp.objective[j];
    }
    if let Phase::Unbounded = t.optimize(&cost)? {
        return Ok(LpResult { status: LpStatus::Unbounded, objective: sign * f64::INFINITY, x: Vec::new() });
    }
    let mut x = lp.lower.clone();
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] += t.rhs[i];
        }
    }
    let viol = lp.max_violation(&x);
    if viol > tol::LP_FEAS {
        return Err(LpError::Numerical(format!("solution violates constraints by {viol:e}")));
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpResult { status: LpStatus::Optimal, objective, x })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bound() {
        let mut lp = LinearProgram::new(1);
        lp.objective[0] = 1.0;
        lp.add(vec![1.0], Sense::Le, 3.0);
        let r = simplex_solve(&lp).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_pair() {
        let mut lp = LinearProgram::new(1);
        lp.add(vec![1.0], Sense::Le, -1.0);
        assert_eq!(simplex_solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn two_variable_vertex() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.add(vec![1.0, 2.0], Sense::Le, 4.0);
        lp.add(vec![3.0, 1.0], Sense::Le, 6.0);
        let r = simplex_solve(&lp).unwrap();
        assert!((r.objective - 2.8).abs() < 1e-12);
        assert!((r.x[0] - 1.6).abs() < 1e-12 && (r.x[1] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn unbounded_and_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 0.0];
        lp.add(vec![1.0, -1.0], Sense::Le, 1.0);
        assert_eq!(simplex_solve(&lp).unwrap().status, LpStatus::Unbounded);

        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.maximize = false;
        lp.add(vec![1.0, 1.0], Sense::Eq, 2.0);
        lp.add(vec![1.0, 0.0], Sense::Ge, 0.5);
        lp.set_bounds(1, 0.25, Some(1.0));
        let r = simplex_solve(&lp).unwrap();
        assert!((r.objective - 2.25).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook rule.
        let mut lp = LinearProgram::new(4);
        lp.objective = vec![0.75, -150.0, 0.02, -6.0];
        lp.add(vec![0.25, -60.0, -0.04, 9.0], Sense::Le, 0.0);
        lp.add(vec![0.5, -90.0, -0.02, 3.0], Sense::Le, 0.0);
        lp.add(vec![0.0, 0.0, 1.0, 0.0], Sense::Le, 1.0);
        let r = simplex_solve(&lp).unwrap();
        assert!((r.objective - 0.05).abs() < 1e-9, "{r:?}");
    }
}
