//! Batches of independent solves over a grid of generated problems.

use serde::Serialize;

use crate::analysis::{audit_residual_ratio, gap_report, scan_trace, MonotonicityReport, RatioAudit};
use crate::cg::{run_cg_with, RunOptions};
use crate::criteria::{CriteriaSet, VerdictKind};
use crate::error::{Error, Result};
use crate::par::{map_runs, map_runs_sequential};
use crate::problems::{generate, Family, GeneratorSpec};
use crate::rounding::RoundingModel;

/// One point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCase {
    pub family: Family,
    pub seed: u64,
    pub model: RoundingModel,
    pub criteria: CriteriaSet,
    pub max_iters: usize,
}

/// Problem families a sweep can draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFamily {
    DiagGeometric,
    DenseSpd,
    TwoCluster,
}

impl SweepFamily {
    pub fn family(self, kappa: f64, n: usize) -> Family {
        match self {
            SweepFamily::DiagGeometric => Family::DiagGeometric { kappa, n },
            SweepFamily::DenseSpd => Family::DenseSpd { kappa, n },
            SweepFamily::TwoCluster => Family::TwoCluster { kappa, n },
        }
    }
}

/// Grid description: every condition number crossed with every order and
/// every family; seeded families are drawn `dense_seeds` times.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub families: Vec<SweepFamily>,
    pub kappas: Vec<f64>,
    pub orders: Vec<usize>,
    pub dense_seeds: u64,
    pub base_seed: u64,
    /// Iteration cap as a multiple of the order.
    pub iters_per_order: usize,
    pub model: RoundingModel,
    pub criteria: CriteriaSet,
}

impl Default for SweepPlan {
    fn default() -> Self {
        SweepPlan {
            families: vec![SweepFamily::DiagGeometric, SweepFamily::DenseSpd],
            kappas: vec![1e2, 1e6, 1e10, 1e12],
            orders: vec![50, 200],
            dense_seeds: 6,
            base_seed: 20_240_601,
            iters_per_order: 5,
            model: RoundingModel::Double,
            criteria: CriteriaSet::none(),
        }
    }
}

impl SweepPlan {
    /// The default grid restricted to the clustered dense family.
    pub fn clustered() -> Self {
        SweepPlan {
            families: vec![SweepFamily::TwoCluster],
            ..SweepPlan::default()
        }
    }

    pub fn cases(&self) -> Vec<SweepCase> {
        let mut out = Vec::new();
        for &kappa in &self.kappas {
            for &n in &self.orders {
                let case = |family, seed| SweepCase {
                    family,
                    seed,
                    model: self.model,
                    criteria: self.criteria.clone(),
                    max_iters: self.iters_per_order * n,
                };
                for f in &self.families {
                    let family = f.family(kappa, n);
                    let seeds = if family.is_seeded() { self.dense_seeds } else { 1 };
                    for s in 0..seeds {
                        out.push(case(family, self.base_seed + s));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOutcome {
    pub case: SweepCase,
    pub verdict: VerdictKind,
    pub stop_index: usize,
    pub audit: RatioAudit,
    pub monotonicity: Vec<MonotonicityReport>,
    pub crossover: Option<usize>,
    pub min_rnorm: f64,
    pub min_snorm: f64,
}

impl SweepOutcome {
    pub fn monotone(&self) -> bool {
        self.monotonicity.iter().all(MonotonicityReport::is_almost_monotone)
    }
}

pub fn run_case(case: &SweepCase) -> Result<SweepOutcome> {
    let g = generate(GeneratorSpec::new(case.family, case.seed))?;
    let run = match run_cg_with(&g.problem, case.model, &case.criteria, RunOptions::new(case.max_iters)) {
        Ok(r) => r,
        Err(Error::Breakdown { partial, .. }) => *partial,
        Err(e) => return Err(e),
    };
    let eps = case.model.eps_m();
    let finite_min = |f: fn(&crate::cg::CgTraceRecord) -> f64| {
        run.trace.iter().map(f).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min)
    };
    Ok(SweepOutcome {
        case: case.clone(),
        verdict: run.verdict.kind,
        stop_index: run.stop_index,
        audit: audit_residual_ratio(&run.trace, eps),
        monotonicity: scan_trace(&run.trace, eps),
        crossover: gap_report(&run.trace).crossover,
        min_rnorm: finite_min(|t| t.rnorm),
        min_snorm: finite_min(|t| t.snorm),
    })
}

/// Runs every case, spreading them over threads when `parallel` is on.
pub fn run_sweep(cases: &[SweepCase]) -> Vec<Result<SweepOutcome>> {
    map_runs(cases, run_case)
}

pub fn run_sweep_sequential(cases: &[SweepCase]) -> Vec<Result<SweepOutcome>> {
    map_runs_sequential(cases, run_case)
}
