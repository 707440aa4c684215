//! Canned property suites with machine-readable summaries.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::{check_identities, exact_vec, RationalMatrix};
use crate::par::map_runs;
use crate::problems::{generate, Family, GeneratorSpec};
use crate::sweep::{run_sweep, SweepOutcome, SweepPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Oracle,
    Monotonicity,
    RatioAudit,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Suite::Oracle),
            "monotonicity" => Ok(Suite::Monotonicity),
            "theorem5" | "ratio-audit" => Ok(Suite::RatioAudit),
            other => Err(Error::usage(format!(
                "unknown suite {other:?} (expected oracle, monotonicity or theorem5)"
            ))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Oracle => "oracle",
            Suite::Monotonicity => "monotonicity",
            Suite::RatioAudit => "theorem5",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteSummary {
    pub suite: Suite,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    pub elapsed_secs: f64,
    pub results: Vec<CaseResult>,
}

impl SuiteSummary {
    fn from_results(suite: Suite, started: Instant, results: Vec<CaseResult>) -> Self {
        let failures = results.iter().filter(|r| !r.passed).count();
        SuiteSummary {
            suite,
            passed: failures == 0 && !results.is_empty(),
            cases: results.len(),
            failures,
            elapsed_secs: started.elapsed().as_secs_f64(),
            results,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Number of integer matrices checked by the oracle suite.
pub const ORACLE_CASES: usize = 20;
pub const ORACLE_MAX_ORDER: usize = 8;
pub const ORACLE_BASE_SEED: u64 = 1_000;

/// `(order, seed)` pairs cycling through orders 2 to 8.
pub fn oracle_cases(count: usize, base_seed: u64) -> Vec<(usize, u64)> {
    (0..count)
        .map(|i| (2 + i % (ORACLE_MAX_ORDER - 1), base_seed + i as u64))
        .collect()
}

fn oracle_case(n: usize, seed: u64) -> CaseResult {
    let name = format!("integer-spd:{n} seed {seed}");
    let outcome = generate(GeneratorSpec::new(Family::IntegerSpd { n }, seed)).and_then(|g| {
        let a = RationalMatrix::from_spd(&g.problem.matrix);
        check_identities(&a, &exact_vec(g.problem.rhs.as_slice()))
    });
    match outcome {
        Ok(c) => CaseResult {
            name,
            passed: c.passed(),
            detail: format!(
                "steps={} residual={} orthogonal={} energy={} dr={} terminated={} solution={}",
                c.steps,
                c.residual_identity,
                c.mutual_orthogonality,
                c.energy_decrease,
                c.dr_bound,
                c.terminated,
                c.solution_matches
            ),
        },
        Err(e) => CaseResult {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Exact identities on random small integer SPD systems.
pub fn verify_oracle(count: usize, base_seed: u64) -> SuiteSummary {
    let started = Instant::now();
    let cases = oracle_cases(count, base_seed);
    let results = map_runs(&cases, |&(n, seed)| oracle_case(n, seed));
    SuiteSummary::from_results(Suite::Oracle, started, results)
}

fn sweep_results(
    outcomes: &[Result<SweepOutcome>],
    judge: impl Fn(&SweepOutcome) -> (bool, String),
) -> Vec<CaseResult> {
    outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| match o {
            Ok(o) => {
                let (passed, detail) = judge(o);
                CaseResult {
                    name: format!("{} seed {}", o.case.family, o.case.seed),
                    passed,
                    detail,
                }
            }
            Err(e) => CaseResult {
                name: format!("case {i}"),
                passed: false,
                detail: e.to_string(),
            },
        })
        .collect()
}

pub fn verify_monotonicity(plan: &SweepPlan) -> SuiteSummary {
    let started = Instant::now();
    let outcomes = run_sweep(&plan.cases());
    let results = sweep_results(&outcomes, |o| {
        let bad: Vec<String> = o
            .monotonicity
            .iter()
            .filter(|m| !m.is_almost_monotone())
            .map(|m| format!("{}:{:?}", m.series_name, m.violations))
            .collect();
        let detail = if bad.is_empty() {
            format!("stop={} verdict={}", o.stop_index, o.verdict)
        } else {
            bad.join(" ")
        };
        (bad.is_empty(), detail)
    });
    SuiteSummary::from_results(Suite::Monotonicity, started, results)
}

pub fn verify_ratio_audit(plan: &SweepPlan) -> SuiteSummary {
    let started = Instant::now();
    let outcomes = run_sweep(&plan.cases());
    let results = sweep_results(&outcomes, |o| {
        let a = &o.audit;
        (
            a.passed(),
            format!(
                "checked={} failures={} min_ratio={:.17} threshold={:.17}",
                a.checked, a.failures, a.min_ratio, a.threshold
            ),
        )
    });
    SuiteSummary::from_results(Suite::RatioAudit, started, results)
}

pub fn run_suite(suite: Suite) -> SuiteSummary {
    match suite {
        Suite::Oracle => verify_oracle(ORACLE_CASES, ORACLE_BASE_SEED),
        Suite::Monotonicity => verify_monotonicity(&SweepPlan::default()),
        Suite::RatioAudit => verify_ratio_audit(&SweepPlan::default()),
    }
}
