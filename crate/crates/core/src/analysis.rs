//! Post-hoc analytics over CG traces.

use serde::Serialize;

use crate::cg::{CgProblem, CgRunResult, CgTraceRecord};
use crate::criteria::VerdictKind;
use crate::error::{check_dims, Error, Result};
use crate::linalg::{norm2, DenseVector, SpdMatrix};

/// Window length and tolerance multiplier for detecting a flat true
/// residual when the stagnation criterion was not active.
pub const STAGNATION_WINDOW: usize = 10;
pub const STAGNATION_TOL_FACTOR: f64 = 10.0;
/// Window for the running maximum of the residual gap.
pub const GAP_WINDOW: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub series_name: String,
    /// Indices before `first_stagnation` with no strictly smaller later value.
    pub violations: Vec<usize>,
    /// Indices from `first_stagnation` on with no strictly smaller later
    /// value; the trace ends before a witness could appear.
    pub trailing: Vec<usize>,
    /// Smallest index after which the series never falls below
    /// `(1 − eps_m)` times its value there.
    pub first_stagnation: usize,
}

impl MonotonicityReport {
    pub fn is_almost_monotone(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For every index `j`, looks for a later `k` with `v_k < v_j`.
///
/// Non-finite entries (iterations where a quantity was not computed) are
/// skipped; indices refer to positions in `series`.
pub fn scan_almost_monotonicity(name: &str, series: &[f64], eps_m: f64) -> MonotonicityReport {
    let points: Vec<(usize, f64)> = series
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .collect();
    // minimum over strictly later points
    let mut later_min = vec![f64::INFINITY; points.len()];
    for i in (0..points.len().saturating_sub(1)).rev() {
        later_min[i] = later_min[i + 1].min(points[i + 1].1);
    }
    let first_stagnation = points
        .iter()
        .zip(&later_min)
        .find(|((_, v), m)| **m >= (1.0 - eps_m) * v)
        .map(|((j, _), _)| *j)
        .unwrap_or(0);

    let mut violations = Vec::new();
    let mut trailing = Vec::new();
    for ((j, v), m) in points.iter().zip(&later_min) {
        if *m < *v {
            continue;
        }
        if *j < first_stagnation {
            violations.push(*j);
        } else {
            trailing.push(*j);
        }
    }
    MonotonicityReport {
        series_name: name.to_owned(),
        violations,
        trailing,
        first_stagnation,
    }
}

/// The four series of a trace, in the order error 2-norm, error A-norm,
/// true residual, recursive residual. Error series are omitted when the
/// trace carries no reference solution.
pub fn scan_trace(trace: &[CgTraceRecord], eps_m: f64) -> Vec<MonotonicityReport> {
    let mut out = Vec::new();
    if trace.iter().all(|t| t.enorm2.is_some()) && !trace.is_empty() {
        let e2: Vec<f64> = trace.iter().map(|t| t.enorm2.unwrap_or(f64::NAN)).collect();
        let ea: Vec<f64> = trace.iter().map(|t| t.enorm_a.unwrap_or(f64::NAN)).collect();
        out.push(scan_almost_monotonicity("enorm2", &e2, eps_m));
        out.push(scan_almost_monotonicity("enormA", &ea, eps_m));
    }
    let s: Vec<f64> = trace.iter().map(|t| t.snorm).collect();
    let r: Vec<f64> = trace.iter().map(|t| t.rnorm).collect();
    out.push(scan_almost_monotonicity("snorm", &s, eps_m));
    out.push(scan_almost_monotonicity("rnorm", &r, eps_m));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloorEstimate {
    #[serde(skip)]
    pub x_stop: DenseVector,
    /// `A (x* − x_stop)`.
    #[serde(skip)]
    pub floor_vector: DenseVector,
    pub floor_norm: f64,
    pub stagnation_index: usize,
    /// Mean true residual norm over the last records of the trace.
    pub trailing_snorm_mean: f64,
    /// `floor_norm / trailing_snorm_mean`.
    pub agreement_ratio: f64,
}

/// `A (x* − x_stop)` in binary64.
pub fn floor_vector(a: &SpdMatrix, xstar: &[f64], x_stop: &[f64]) -> Result<Vec<f64>> {
    check_dims(a.order(), xstar.len())?;
    check_dims(a.order(), x_stop.len())?;
    let e: Vec<f64> = xstar.iter().zip(x_stop).map(|(a, b)| a - b).collect();
    let mut out = vec![0.0; e.len()];
    a.apply(&e, &mut out);
    Ok(out)
}

/// Index where the true residual stopped moving, if it did.
///
/// The run counts as stagnated when the stagnation criterion stopped it,
/// when the recursive residual is exactly zero (no further correction is
/// possible), or when the last [`STAGNATION_WINDOW`] iterations all change
/// `‖s_k‖` by less than `10 eps_m` relative.
pub fn detect_stagnation(run: &CgRunResult) -> Option<usize> {
    if run.verdict.kind == VerdictKind::Stagnation || run.last().rnorm == 0.0 {
        return Some(run.stop_index);
    }
    let tol = STAGNATION_TOL_FACTOR * run.model.eps_m();
    let s: Vec<f64> = run.series(|t| t.snorm);
    let mut start = s.len() - 1;
    while start > 0 {
        let (prev, cur) = (s[start - 1], s[start]);
        if !(prev.is_finite() && cur.is_finite()) {
            break;
        }
        let change = if prev == 0.0 {
            if cur == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            (cur - prev).abs() / prev
        };
        if change >= tol {
            break;
        }
        start -= 1;
    }
    (s.len() - 1 - start >= STAGNATION_WINDOW).then_some(start)
}

pub fn estimate_floor(problem: &CgProblem, run: &CgRunResult) -> Result<FloorEstimate> {
    let xstar = problem
        .reference_solution
        .as_ref()
        .ok_or_else(|| Error::Unavailable("floor estimate needs a reference solution".into()))?;
    let stagnation_index = detect_stagnation(run).ok_or(Error::NotStagnated)?;
    let x_stop = run.final_x.clone();
    let fv = floor_vector(&problem.matrix, xstar.as_slice(), x_stop.as_slice())?;
    let floor_norm = norm2(&fv);
    let tail: Vec<f64> = run
        .trace
        .iter()
        .rev()
        .take(STAGNATION_WINDOW)
        .map(|t| t.snorm)
        .filter(|s| s.is_finite())
        .collect();
    let trailing_snorm_mean = if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    Ok(FloorEstimate {
        x_stop,
        floor_vector: DenseVector::new(fv)?,
        floor_norm,
        stagnation_index,
        trailing_snorm_mean,
        agreement_ratio: floor_norm / trailing_snorm_mean,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AuditRow {
    pub k: usize,
    pub dr_ratio: f64,
    pub pass: bool,
    /// `‖r_{k−1}‖²` is below the smallest normal binary64, so the inner
    /// products of this step were computed with reduced relative accuracy.
    pub subnormal_rr: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioAudit {
    /// `1 − 2 eps_m / (1 + eps_m) − slack`.
    pub threshold: f64,
    pub checked: usize,
    pub failures: usize,
    /// Failures on rows flagged `subnormal_rr`.
    pub subnormal_failures: usize,
    pub min_ratio: f64,
    pub rows: Vec<AuditRow>,
}

impl RatioAudit {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Slack on the per-step residual-change bound.
pub const AUDIT_SLACK: f64 = 1e-10;

/// Checks `‖r_{k−1} − r_k‖ / ‖r_{k−1}‖ ≥ 1 − 2 eps_m / (1 + eps_m)` (less
/// [`AUDIT_SLACK`]) on every recorded step.
pub fn audit_residual_ratio(trace: &[CgTraceRecord], eps_m: f64) -> RatioAudit {
    let threshold = 1.0 - 2.0 * eps_m / (1.0 + eps_m) - AUDIT_SLACK;
    let rows: Vec<AuditRow> = trace
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let prev = i.checked_sub(1).map(|j| trace[j].rnorm);
            t.dr_ratio.map(|r| AuditRow {
                k: t.k,
                dr_ratio: r,
                pass: r >= threshold,
                subnormal_rr: prev.is_some_and(|p| p * p < f64::MIN_POSITIVE),
            })
        })
        .collect();
    RatioAudit {
        threshold,
        checked: rows.len(),
        failures: rows.iter().filter(|r| !r.pass).count(),
        subnormal_failures: rows.iter().filter(|r| !r.pass && r.subnormal_rr).count(),
        min_ratio: rows.iter().map(|r| r.dr_ratio).fold(f64::INFINITY, f64::min),
        rows,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub gaps: Vec<f64>,
    /// Maximum gap over the last [`GAP_WINDOW`] iterations.
    pub window_max: Vec<f64>,
    pub max_gap: f64,
    /// First iteration where the gap exceeds the true residual.
    pub crossover: Option<usize>,
}

pub fn gap_report(trace: &[CgTraceRecord]) -> GapReport {
    let gaps: Vec<f64> = trace.iter().map(|t| t.gap).collect();
    let window_max = (0..gaps.len())
        .map(|k| {
            gaps[k.saturating_sub(GAP_WINDOW - 1)..=k]
                .iter()
                .copied()
                .filter(|g| g.is_finite())
                .fold(f64::NAN, f64::max)
        })
        .collect();
    let crossover = trace.iter().find(|t| t.gap > t.snorm).map(|t| t.k);
    GapReport {
        max_gap: gaps.iter().copied().filter(|g| g.is_finite()).fold(0.0, f64::max),
        gaps,
        window_max,
        crossover,
    }
}
