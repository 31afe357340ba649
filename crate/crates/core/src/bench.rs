//! Seeded instance generation and benchmark rows.
//!
//! Every instance is a pure function of `(seed, n, regime)`, so rows can be
//! evaluated in any order or in parallel and still produce the same CSV.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{self, STRUCTURED_MAX};
use crate::bounds::{self, ALG_OPT_MAX};
use crate::mechanisms::{best_of_static, CaseLabel};
use crate::model::{Instance, Task, Valuation};
use crate::optlp::{self, IC_OPT_MAX};

/// Sampling regime for random instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regime {
    /// Every task has `p/(2c) > 11`.
    XHeavy,
    /// Every task has `p < 1/4` and `1 ≤ p/(2c) ≤ 16/15`.
    Y2Heavy,
    /// Each task draws its case uniformly.
    Mixed,
    Symmetric { prob: f64, cost: f64 },
}

#[derive(Debug, PartialEq)]
pub struct RegimeParseError(pub String);

impl fmt::Display for RegimeParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown regime '{}' (expected x-heavy, y2-heavy, mixed or symmetric:P,C)", self.0)
    }
}

impl std::error::Error for RegimeParseError {}

impl FromStr for Regime {
    type Err = RegimeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || RegimeParseError(s.to_string());
        match s.to_ascii_lowercase().as_str() {
            "x-heavy" | "x" => Ok(Regime::XHeavy),
            "y2-heavy" | "y2" => Ok(Regime::Y2Heavy),
            "mixed" => Ok(Regime::Mixed),
            other => {
                let body = other
                    .strip_prefix("symmetric")
                    .ok_or_else(err)?
                    .trim_start_matches([':', '('])
                    .trim_end_matches(')');
                let (p, c) = body.split_once(',').ok_or_else(err)?;
                let prob: f64 = p.trim().parse().map_err(|_| err())?;
                let cost: f64 = c.trim().parse().map_err(|_| err())?;
                Ok(Regime::Symmetric { prob, cost })
            }
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::XHeavy => write!(f, "x-heavy"),
            Regime::Y2Heavy => write!(f, "y2-heavy"),
            Regime::Mixed => write!(f, "mixed"),
            Regime::Symmetric { prob, cost } => write!(f, "symmetric:{prob},{cost}"),
        }
    }
}

/// `(p, c)` with `p` uniform on `[p_lo, p_hi)` and `p/(2c)` uniform on
/// `[r_lo, r_hi]`.
fn draw(rng: &mut ChaCha8Rng, p_lo: f64, p_hi: f64, r_lo: f64, r_hi: f64) -> (f64, f64) {
    let p = rng.gen_range(p_lo..p_hi);
    let r = rng.gen_range(r_lo..=r_hi);
    (p, p / (2.0 * r))
}

fn draw_case(rng: &mut ChaCha8Rng, case: CaseLabel) -> (f64, f64) {
    match case {
        CaseLabel::X => draw(rng, 0.2, 1.0, 12.0, 40.0),
        CaseLabel::Y1 => draw(rng, 0.25, 1.0, 1.0, 16.0 / 15.0),
        CaseLabel::Y2 => draw(rng, 0.02, 0.25, 1.0, 16.0 / 15.0),
        _ => draw(rng, 0.05, 1.0, 1.1, 11.0),
    }
}

/// Deterministic random additive instance; `n ≥ 1`.
pub fn gen(seed: u64, n: usize, regime: Regime) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks = (0..n)
        .map(|i| {
            let (prob, cost) = match regime {
                Regime::XHeavy => draw_case(&mut rng, CaseLabel::X),
                Regime::Y2Heavy => draw_case(&mut rng, CaseLabel::Y2),
                Regime::Mixed => {
                    let case = CaseLabel::STATIC[rng.gen_range(0..4)];
                    draw_case(&mut rng, case)
                }
                Regime::Symmetric { prob, cost } => (prob, cost),
            };
            let value = match regime {
                Regime::Symmetric { .. } => 1.0,
                _ => rng.gen_range(0.1..1.0),
            };
            Task::new(i, cost, prob, value)
        })
        .collect();
    Instance::new(tasks, Valuation::Additive, 1.0).expect("sampled parameters are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub seed: u64,
    pub n: usize,
    pub regime: String,
    pub n_x: usize,
    pub n_y1: usize,
    pub n_y2: usize,
    pub n_y3: usize,
    pub mechanism: String,
    pub value: f64,
    pub alg_opt: Option<f64>,
    pub ic_opt: Option<f64>,
    pub ratio_vs_alg_opt: Option<f64>,
    pub ratio_vs_ic_opt: Option<f64>,
    pub ic_holds: bool,
    pub error: Option<String>,
    pub runtime_ms: f64,
}

pub const CSV_HEADER: [&str; 15] = [
    "seed",
    "n",
    "regime",
    "n_x",
    "n_y1",
    "n_y2",
    "n_y3",
    "mechanism",
    "value",
    "alg_opt",
    "ic_opt",
    "ratio_vs_alg_opt",
    "ratio_vs_ic_opt",
    "ic_holds",
    "error",
];

fn ratio(num: f64, den: Option<f64>) -> Option<f64> {
    den.filter(|&d| d > 0.0).map(|d| num / d)
}

fn evaluate(seed: u64, n: usize, regime: Regime) -> Result<BenchRow, String> {
    let inst = gen(seed, n, regime);
    let sol = best_of_static(&inst).map_err(|e| e.to_string())?;
    let count = |l| sol.case_sizes.get(&l).copied().unwrap_or(0);
    let case = sol.mechanism.provenance.case.map_or("none".to_string(), |c| format!("{c:?}"));
    let alg_opt = if n <= ALG_OPT_MAX { Some(bounds::alg_opt(&inst, 1.0).map_err(|e| e.to_string())?) } else { None };
    let ic_opt = if n <= IC_OPT_MAX { Some(optlp::ic_opt_exact(&inst).map_err(|e| e.to_string())?.value) } else { None };
    let ic_holds = if sol.mechanism.recommendation.len() <= STRUCTURED_MAX {
        agent::verify_ic(&inst, &sol.mechanism).map_err(|e| e.to_string())?.holds
    } else {
        !matches!(sol.mechanism.certificate, crate::mechanisms::Certificate::None)
    };
    Ok(BenchRow {
        seed,
        n,
        regime: regime.to_string(),
        n_x: count(CaseLabel::X),
        n_y1: count(CaseLabel::Y1),
        n_y2: count(CaseLabel::Y2),
        n_y3: count(CaseLabel::Y3),
        mechanism: format!("{}/{}", sol.mechanism.provenance.procedure, case),
        value: sol.value,
        alg_opt,
        ic_opt,
        ratio_vs_alg_opt: ratio(sol.value, alg_opt),
        ratio_vs_ic_opt: ratio(sol.value, ic_opt),
        ic_holds,
        error: None,
        runtime_ms: 0.0,
    })
}

/// One row; failures are recorded in `error` rather than propagated.
pub fn bench_row(seed: u64, n: usize, regime: Regime) -> BenchRow {
    let start = Instant::now();
    let mut row = evaluate(seed, n, regime).unwrap_or_else(|e| BenchRow {
        seed,
        n,
        regime: regime.to_string(),
        n_x: 0,
        n_y1: 0,
        n_y2: 0,
        n_y3: 0,
        mechanism: String::new(),
        value: 0.0,
        alg_opt: None,
        ic_opt: None,
        ratio_vs_alg_opt: None,
        ratio_vs_ic_opt: None,
        ic_holds: false,
        error: Some(e),
        runtime_ms: 0.0,
    });
    row.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

/// Rows for every `(seed, size, regime)`, seeds outermost, in that order.
pub fn run_bench(seeds: &[u64], sizes: &[usize], regimes: &[Regime]) -> Vec<BenchRow> {
    let keys: Vec<(u64, usize, Regime)> = seeds
        .iter()
        .flat_map(|&s| sizes.iter().flat_map(move |&n| regimes.iter().map(move |&r| (s, n, r))))
        .collect();
    keys.into_par_iter().map(|(s, n, r)| bench_row(s, n, r)).collect()
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV with a fixed header; `runtime_ms` is appended only when `timing`
/// is set, so untimed output is reproducible byte for byte.
pub fn write_csv<W: std::io::Write>(rows: &[BenchRow], timing: bool, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if timing {
        header.push("runtime_ms");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.seed.to_string(),
            r.n.to_string(),
            r.regime.clone(),
            r.n_x.to_string(),
            r.n_y1.to_string(),
            r.n_y2.to_string(),
            r.n_y3.to_string(),
            r.mechanism.clone(),
            r.value.to_string(),
            cell(r.alg_opt),
            cell(r.ic_opt),
            cell(r.ratio_vs_alg_opt),
            cell(r.ratio_vs_ic_opt),
            r.ic_holds.to_string(),
            r.error.clone().unwrap_or_default(),
        ];
        if timing {
            rec.push(format!("{:.3}", r.runtime_ms));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_regime_is_identical_tasks() {
        let inst = gen(1, 5, Regime::Symmetric { prob: 0.5, cost: 0.1 });
        assert_eq!(inst.n(), 5);
        assert!(inst.tasks.iter().all(|t| t.prob == 0.5 && t.cost == 0.1 && t.value == 1.0));
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gen(7, 6, Regime::Mixed), gen(7, 6, Regime::Mixed));
        assert_ne!(gen(7, 6, Regime::Mixed), gen(8, 6, Regime::Mixed));
    }

    #[test]
    fn regimes_hit_their_cases() {
        assert!(gen(3, 20, Regime::XHeavy).tasks.iter().all(|t| t.reveal_ratio() > 11.0));
        assert!(gen(3, 20, Regime::Y2Heavy)
            .tasks
            .iter()
            .all(|t| t.prob < 0.25 && (1.0..=16.0 / 15.0 + 1e-12).contains(&t.reveal_ratio())));
    }

    #[test]
    fn regime_parsing() {
        assert_eq!("x-heavy".parse::<Regime>().unwrap(), Regime::XHeavy);
        assert_eq!("symmetric:0.5,0.1".parse::<Regime>().unwrap(), Regime::Symmetric { prob: 0.5, cost: 0.1 });
        assert_eq!("symmetric(0.5,0.1)".parse::<Regime>().unwrap(), Regime::Symmetric { prob: 0.5, cost: 0.1 });
        assert!("nope".parse::<Regime>().is_err());
        let r = Regime::Symmetric { prob: 0.25, cost: 0.05 };
        assert_eq!(r.to_string().parse::<Regime>().unwrap(), r);
    }

    #[test]
    fn empty_bench_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&run_bench(&[], &[3], &[Regime::Mixed]), false, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }
}
