use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use kscore::agent::{self, AgentError, SequentialStrategy, SEQUENTIAL_MAX};
use kscore::bench::{self, Regime};
use kscore::bounds::{self, BoundsError, ALG_OPT_MAX};
use kscore::hardness::{self, HardnessError, SubsetSumInstance};
use kscore::mechanisms::{self, Mechanism, MechanismError, Solution};
use kscore::model::{self, Instance, ModelError, TaskSet};
use kscore::optlp::{self, OptError};
use kscore::scoring::ScoringError;

#[derive(Parser)]
#[command(name = "kscore", version, about = "Scoring-rule mechanisms for costly multi-task effort")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Eager,
    Fixed,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n: usize,
        /// x-heavy, y2-heavy, mixed or symmetric:P,C
        #[arg(long, default_value = "mixed")]
        regime: Regime,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best-of mechanism for a best-responding agent.
    Solve {
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best-of mechanism for a sequential agent.
    SolveSeq {
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a mechanism against the exact best-response oracle.
    VerifyIc {
        instance: PathBuf,
        mechanism: PathBuf,
    },
    /// Optimal incentive-compatible mechanism of a tiny instance.
    Opt {
        instance: PathBuf,
        /// Include the full score table of the witness rule.
        #[arg(long)]
        table: bool,
    },
    /// Largest incentivizable effort level among identical tasks.
    SymOpt {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        c: f64,
    },
    /// Analytic bounds for an instance, one JSON object per line.
    Bounds { instance: PathBuf },
    /// Reduce a subset-sum instance {"z": [...], "Z": int}.
    HardnessGen {
        subset_sum: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a subset-sum certificate against the reduction.
    HardnessCheck {
        subset_sum: PathBuf,
        /// Comma-separated indices of the certificate subset.
        #[arg(long, value_delimiter = ',')]
        subset: Vec<usize>,
    },
    /// Exact and Monte-Carlo sequential simulation of a mechanism.
    SeqSim {
        instance: PathBuf,
        mechanism: PathBuf,
        #[arg(long, value_enum, default_value = "eager")]
        strategy: StrategyArg,
        /// Task order for the fixed strategy (defaults to the recommendation).
        #[arg(long, value_delimiter = ',')]
        order: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Benchmark the static pipeline over seeded instances, as CSV.
    Bench {
        /// First seed; rows use seeds seed, seed+1, ...
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_value = "3")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ';', default_value = "mixed")]
        regime: Vec<Regime>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Append a runtime_ms column (makes output nondeterministic).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status for an error: 2 for invalid input, 3 for oracle size
/// limits, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    const VALIDATION: u8 = 2;
    const SIZE: u8 = 3;
    fn scoring(e: &ScoringError) -> u8 {
        match e {
            ScoringError::SizeLimit { .. } => SIZE,
            _ => VALIDATION,
        }
    }
    fn agent(e: &AgentError) -> u8 {
        match e {
            AgentError::SizeLimit { .. } => SIZE,
            AgentError::Scoring(s) => scoring(s),
            AgentError::Mismatch(_) => VALIDATION,
        }
    }
    for cause in err.chain() {
        if cause.is::<ModelError>() || cause.is::<serde_json::Error>() {
            return VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<AgentError>() {
            return agent(e);
        }
        if let Some(e) = cause.downcast_ref::<ScoringError>() {
            return scoring(e);
        }
        if let Some(e) = cause.downcast_ref::<OptError>() {
            return match e {
                OptError::SizeLimit { .. } => SIZE,
                OptError::Scoring(s) => scoring(s),
                OptError::Lp(_) => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<BoundsError>() {
            return match e {
                BoundsError::SizeLimit { .. } => SIZE,
                BoundsError::Posterior(_) => VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<MechanismError>() {
            return match e {
                MechanismError::Agent(a) => agent(a),
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<HardnessError>() {
            return match e {
                HardnessError::Agent(a) => agent(a),
                HardnessError::Overflow => 1,
                _ => VALIDATION,
            };
        }
    }
    1
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_instance(path: &Path) -> Result<Instance> {
    Ok(model::load_instance(&read(path)?)?)
}

fn read_mechanism(path: &Path) -> Result<Mechanism> {
    Ok(serde_json::from_str(&read(path)?)?)
}

fn read_subset_sum(path: &Path) -> Result<SubsetSumInstance> {
    let ss: SubsetSumInstance = serde_json::from_str(&read(path)?)?;
    ss.validate()?;
    Ok(ss)
}

fn emit(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => print_stdout(&text)?,
    }
    Ok(())
}

/// Writes a line to stdout; a closed pipe ends output quietly.
fn print_stdout(text: &str) -> Result<()> {
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn solution_doc(sol: &Solution, inst: &Instance) -> Result<Value> {
    let mut doc = serde_json::to_value(&sol.mechanism)?;
    let alg_opt = if inst.n() <= ALG_OPT_MAX { Some(bounds::alg_opt(inst, inst.budget)?) } else { None };
    let obj = doc.as_object_mut().expect("mechanism serializes to an object");
    obj.insert("case_sizes".into(), serde_json::to_value(&sol.case_sizes)?);
    obj.insert("value".into(), json!(sol.value));
    obj.insert("alg_opt".into(), json!(alg_opt));
    obj.insert("candidates".into(), serde_json::to_value(&sol.candidates)?);
    Ok(doc)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { seed, n, regime, out } => {
            if n == 0 {
                return Err(ModelError::Validation("n must be at least 1".into()).into());
            }
            emit(&bench::gen(seed, n, regime), out.as_deref())
        }
        Command::Solve { instance, out } => {
            let inst = read_instance(&instance)?;
            let sol = mechanisms::best_of_static(&inst)?;
            emit(&solution_doc(&sol, &inst)?, out.as_deref())
        }
        Command::SolveSeq { instance, out } => {
            let inst = read_instance(&instance)?;
            let sol = mechanisms::best_of_sequential(&inst)?;
            let mut doc = solution_doc(&sol, &inst)?;
            if sol.mechanism.recommendation.len() <= SEQUENTIAL_MAX {
                let res = agent::sequential_simulate(&inst, &sol.mechanism, &SequentialStrategy::eager())?;
                doc["sequential"] = serde_json::to_value(&res)?;
            }
            emit(&doc, out.as_deref())
        }
        Command::VerifyIc { instance, mechanism } => {
            let inst = read_instance(&instance)?;
            let mech = read_mechanism(&mechanism)?;
            emit(&agent::verify_ic(&inst, &mech)?, None)
        }
        Command::Opt { instance, table } => {
            let inst = read_instance(&instance)?;
            let opt = optlp::ic_opt_exact(&inst)?;
            let mut doc = json!({ "value": opt.value, "recommendation": opt.recommendation });
            if table {
                doc["rule"] = serde_json::to_value(&opt.rule)?;
            }
            emit(&doc, None)
        }
        Command::SymOpt { n, p, c } => {
            let level = optlp::symmetric_max_effort(n, p, c)?;
            let witness = optlp::symmetric_feasible(n, p, c, level)?;
            let upper = bounds::symmetric_effort_upper(p, c);
            emit(&json!({ "n": n, "p": p, "c": c, "max_effort": level, "witness": witness, "upper_bound": upper }), None)
        }
        Command::Bounds { instance } => {
            let inst = read_instance(&instance)?;
            let mut reports = vec![
                bounds::prob_budget_bound(&inst.tasks),
                bounds::cardinality_bound(&inst.tasks),
                bounds::BoundReport {
                    name: "truncation_tail".into(),
                    value: bounds::truncation_tail_bound(),
                    satisfied: None,
                    applicable: true,
                },
            ];
            if inst.n() <= ALG_OPT_MAX {
                reports.push(bounds::BoundReport {
                    name: "alg_opt".into(),
                    value: bounds::alg_opt(&inst, inst.budget)?,
                    satisfied: None,
                    applicable: true,
                });
            }
            if let Some(t) = inst.tasks.first() {
                if inst.tasks.iter().all(|u| u.prob == t.prob && u.cost == t.cost) {
                    reports.push(bounds::symmetric_effort_upper(t.prob, t.cost));
                }
            }
            for r in reports {
                print_stdout(&serde_json::to_string(&r)?)?;
            }
            Ok(())
        }
        Command::HardnessGen { subset_sum, out } => {
            let red = hardness::reduce_subset_sum(&read_subset_sum(&subset_sum)?)?;
            emit(&red, out.as_deref())
        }
        Command::HardnessCheck { subset_sum, subset } => {
            let red = hardness::reduce_subset_sum(&read_subset_sum(&subset_sum)?)?;
            let report = hardness::certificate_check(&red, &TaskSet::new(subset))?;
            emit(&report, None)?;
            if !report.all_hold() {
                return Err(ModelError::Validation("certificate does not hold".into()).into());
            }
            Ok(())
        }
        Command::SeqSim { instance, mechanism, strategy, order, paths, seed } => {
            let inst = read_instance(&instance)?;
            let mech = read_mechanism(&mechanism)?;
            let strat = match strategy {
                StrategyArg::Eager => SequentialStrategy::eager(),
                StrategyArg::Fixed if order.is_empty() => SequentialStrategy::fixed_order(mech.recommendation.iter().collect()),
                StrategyArg::Fixed => SequentialStrategy::fixed_order(order),
            };
            let exact = agent::sequential_simulate(&inst, &mech, &strat)?;
            let mut doc = serde_json::to_value(&exact)?;
            if paths > 0 {
                let (mean, stderr) = agent::sequential_monte_carlo(&inst, &mech, &strat, paths, seed)?;
                doc["monte_carlo"] = json!({ "paths": paths, "seed": seed, "mean": mean, "stderr": stderr });
            }
            emit(&doc, None)
        }
        Command::Bench { seed, seeds, n, regime, jobs, timing, out } => {
            let seed_list: Vec<u64> = (0..seeds).map(|i| seed.wrapping_add(i)).collect();
            let rows = match jobs {
                Some(j) => rayon::ThreadPoolBuilder::new()
                    .num_threads(j.max(1))
                    .build()?
                    .install(|| bench::run_bench(&seed_list, &n, &regime)),
                None => bench::run_bench(&seed_list, &n, &regime),
            };
            match out {
                Some(p) => bench::write_csv(&rows, timing, fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?)?,
                None => bench::write_csv(&rows, timing, io::stdout().lock())?,
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
