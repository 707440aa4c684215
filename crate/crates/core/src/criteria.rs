//! Stopping criteria.
//!
//! Every criterion is a pure predicate over values of the trace. A
//! [`CriteriaSet`] evaluates its members in declaration order after each
//! completed trace record; the first one that holds stops the run.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the Ginsburg growth factor `exp(k/n)^2` is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum GinsburgExponent {
    /// `(e^{k/n})^2 = e^{2k/n}`
    #[default]
    #[serde(rename = "2k/n")]
    TwoKOverN,
    /// `e^{(k/n)^2}`
    #[serde(rename = "(k/n)^2")]
    KOverNSquared,
}

impl GinsburgExponent {
    pub fn factor(self, k: usize, n: usize) -> f64 {
        let t = k as f64 / n as f64;
        match self {
            GinsburgExponent::TwoKOverN => (2.0 * t).exp(),
            GinsburgExponent::KOverNSquared => (t * t).exp(),
        }
    }
}

impl FromStr for GinsburgExponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "2k/n" => Ok(GinsburgExponent::TwoKOverN),
            "(k/n)^2" => Ok(GinsburgExponent::KOverNSquared),
            other => Err(Error::usage(format!(
                "unknown Ginsburg exponent {other:?} (expected \"2k/n\" or \"(k/n)^2\")"
            ))),
        }
    }
}

impl fmt::Display for GinsburgExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GinsburgExponent::TwoKOverN => "2k/n",
            GinsburgExponent::KOverNSquared => "(k/n)^2",
        })
    }
}

/// `‖r_k‖ < exp(k/n)^2 ‖s_k − r_k‖`, with the factor read as `e^{2k/n}`.
pub fn ginsburg_check(k: usize, n: usize, rnorm: f64, gap: f64) -> bool {
    ginsburg_check_with(GinsburgExponent::TwoKOverN, k, n, rnorm, gap)
}

pub fn ginsburg_check_with(exp: GinsburgExponent, k: usize, n: usize, rnorm: f64, gap: f64) -> bool {
    rnorm < exp.factor(k, n) * gap
}

/// The correction can no longer change any component of `x`: every nonzero
/// component has `|Δx_i| / |x_i| < eps_m`, and zero components receive an
/// exactly zero correction.
pub fn stagnation_check(x: &[f64], delta_x: &[f64], eps_m: f64) -> bool {
    max_relative_update(x, delta_x) < eps_m
}

/// Largest componentwise `|Δx_i| / |x_i|`; infinite when a zero component
/// receives a nonzero correction.
pub fn max_relative_update(x: &[f64], delta_x: &[f64]) -> f64 {
    x.iter().zip(delta_x).fold(0.0f64, |worst, (&xi, &di)| {
        let ratio = if xi != 0.0 {
            di.abs() / xi.abs()
        } else if di == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst.max(ratio)
    })
}

/// `‖r_{k+1}‖ ≤ eps_m ‖r_k‖`: the recursive residual collapsed by a factor
/// no rounding can explain.
pub fn recursive_collapse_check(rnorm_next: f64, rnorm: f64, eps_m: f64) -> bool {
    rnorm_next <= eps_m * rnorm
}

/// `‖s_k‖ / ‖b‖ ≤ tol`, on the true residual.
pub fn relres_check(snorm: f64, bnorm: f64, tol: f64) -> Result<bool> {
    if !(bnorm > 0.0) {
        return Err(Error::usage("relative residual needs a nonzero right-hand side"));
    }
    if !(tol > 0.0) {
        return Err(Error::usage("relative residual tolerance must be positive"));
    }
    Ok(snorm / bnorm <= tol)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Criterion {
    Ginsburg,
    Stagnation,
    RelRes { tol: f64 },
    Collapse,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Ginsburg => f.write_str("ginsburg"),
            Criterion::Stagnation => f.write_str("stagnation"),
            Criterion::RelRes { tol } => write!(f, "relres:{tol:e}"),
            Criterion::Collapse => f.write_str("collapse"),
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "ginsburg" => return Ok(Criterion::Ginsburg),
            "stagnation" => return Ok(Criterion::Stagnation),
            "collapse" => return Ok(Criterion::Collapse),
            _ => {}
        }
        if let Some(tol) = s.strip_prefix("relres:") {
            let tol: f64 = tol
                .parse()
                .map_err(|_| Error::usage(format!("invalid relres tolerance in {s:?}")))?;
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::usage(format!("relres tolerance must be positive, got {tol}")));
            }
            return Ok(Criterion::RelRes { tol });
        }
        Err(Error::usage(format!("unknown criterion {s:?}")))
    }
}

/// Ordered list of active criteria.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CriteriaSet {
    criteria: Vec<Criterion>,
    ginsburg_exponent: GinsburgExponent,
}

impl CriteriaSet {
    pub fn new(criteria: Vec<Criterion>) -> Self {
        CriteriaSet {
            criteria,
            ginsburg_exponent: GinsburgExponent::default(),
        }
    }

    /// No criteria: the run goes to its iteration cap.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_ginsburg_exponent(mut self, exp: GinsburgExponent) -> Self {
        self.ginsburg_exponent = exp;
        self
    }

    pub fn ginsburg_exponent(&self) -> GinsburgExponent {
        self.ginsburg_exponent
    }

    pub fn criteria(&self) -> &[Criterion] {
        &self.criteria
    }

    pub fn is_empty(&self) -> bool {
        self.criteria.is_empty()
    }

    /// First criterion that holds at this step, in declaration order.
    pub fn evaluate(&self, ctx: &StepContext<'_>) -> Option<StoppingVerdict> {
        self.criteria.iter().find_map(|c| self.evaluate_one(*c, ctx))
    }

    fn evaluate_one(&self, c: Criterion, ctx: &StepContext<'_>) -> Option<StoppingVerdict> {
        let k = ctx.k;
        match c {
            Criterion::Ginsburg => {
                let gap = ctx.gap?;
                let factor = self.ginsburg_exponent.factor(k, ctx.n);
                (ctx.rnorm < factor * gap).then(|| {
                    StoppingVerdict::new(VerdictKind::Ginsburg, k)
                        .with("rnorm", ctx.rnorm)
                        .with("gap", gap)
                        .with("factor", factor)
                        .with("k", k as f64)
                        .with("n", ctx.n as f64)
                })
            }
            Criterion::Stagnation => {
                let worst = max_relative_update(ctx.x_prev, ctx.delta_x);
                (worst < ctx.eps_m).then(|| {
                    StoppingVerdict::new(VerdictKind::Stagnation, k)
                        .with("max_relative_update", worst)
                        .with("eps_m", ctx.eps_m)
                })
            }
            Criterion::RelRes { tol } => {
                let snorm = ctx.snorm?;
                if !(ctx.bnorm > 0.0) {
                    return None;
                }
                let ratio = snorm / ctx.bnorm;
                (ratio <= tol).then(|| {
                    StoppingVerdict::new(VerdictKind::Relres, k)
                        .with("snorm", snorm)
                        .with("bnorm", ctx.bnorm)
                        .with("ratio", ratio)
                        .with("tol", tol)
                })
            }
            Criterion::Collapse => {
                recursive_collapse_check(ctx.rnorm, ctx.rnorm_prev, ctx.eps_m).then(|| {
                    StoppingVerdict::new(VerdictKind::RecursiveCollapse, k)
                        .with("rnorm", ctx.rnorm)
                        .with("rnorm_prev", ctx.rnorm_prev)
                        .with("eps_m", ctx.eps_m)
                })
            }
        }
    }
}

impl fmt::Display for CriteriaSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.criteria.iter().map(|c| c.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for CriteriaSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(CriteriaSet::none());
        }
        let criteria = s.split(',').map(str::parse).collect::<Result<Vec<_>>>()?;
        Ok(CriteriaSet::new(criteria))
    }
}

impl TryFrom<String> for CriteriaSet {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CriteriaSet> for String {
    fn from(c: CriteriaSet) -> String {
        c.to_string()
    }
}

/// Values available to the criteria once the record for iteration `k` is
/// complete.
#[derive(Clone, Debug)]
pub struct StepContext<'a> {
    pub k: usize,
    pub n: usize,
    pub rnorm: f64,
    pub rnorm_prev: f64,
    /// Absent on iterations where the true residual was not recomputed.
    pub snorm: Option<f64>,
    pub gap: Option<f64>,
    pub bnorm: f64,
    pub eps_m: f64,
    /// Iterate before the last correction, and that correction.
    pub x_prev: &'a [f64],
    pub delta_x: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    Ginsburg,
    Stagnation,
    Relres,
    RecursiveCollapse,
    Exhausted,
    Breakdown,
}

impl VerdictKind {
    /// Stopped by an active criterion (as opposed to the cap or a failure).
    pub fn is_criterion(self) -> bool {
        !matches!(self, VerdictKind::Exhausted | VerdictKind::Breakdown)
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictKind::Ginsburg => "ginsburg",
            VerdictKind::Stagnation => "stagnation",
            VerdictKind::Relres => "relres",
            VerdictKind::RecursiveCollapse => "recursive-collapse",
            VerdictKind::Exhausted => "exhausted",
            VerdictKind::Breakdown => "breakdown",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingVerdict {
    pub kind: VerdictKind,
    pub fired_at: usize,
    pub witness: BTreeMap<String, f64>,
}

impl StoppingVerdict {
    pub fn new(kind: VerdictKind, fired_at: usize) -> Self {
        StoppingVerdict {
            kind,
            fired_at,
            witness: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.witness.insert(name.to_owned(), value);
        self
    }
}
