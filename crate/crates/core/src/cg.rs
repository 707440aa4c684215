//! Conjugate gradient with full residual instrumentation.
//!
//! Each iteration records the recursive residual `r_k`, the true residual
//! `s_k = b - A x_k` (recomputed from the iterate), their gap, and when a
//! reference solution is known the 2-norm and A-norm of the error
//! `e_k = x* - x_k`. The recursion is Hestenes-Stiefel:
//!
//! ```text
//! alpha_k = (r_k, r_k) / (p_k, A p_k)
//! x_{k+1} = x_k + alpha_k p_k
//! r_{k+1} = r_k - alpha_k A p_k
//! beta_k  = (r_{k+1}, r_{k+1}) / (r_k, r_k)
//! p_{k+1} = r_{k+1} + beta_k p_k
//! ```
//!
//! All of it runs through a [`RoundingModel`]; the recorded norms are
//! measured in binary64 from the stored vectors.

use serde::{Deserialize, Serialize};

use crate::criteria::{CriteriaSet, StepContext, StoppingVerdict, VerdictKind};
use crate::error::{check_dims, Error, Result};
use crate::linalg::{dot_in, norm2, norm_a, round_slice, DenseVector, SpdMatrix};
use crate::rounding::RoundingModel;

#[derive(Clone, Debug)]
pub struct CgProblem {
    pub matrix: SpdMatrix,
    pub rhs: DenseVector,
    pub x0: DenseVector,
    /// `x*`, when known; enables the error columns of the trace.
    pub reference_solution: Option<DenseVector>,
}

impl CgProblem {
    pub fn new(
        matrix: SpdMatrix,
        rhs: DenseVector,
        x0: DenseVector,
        reference_solution: Option<DenseVector>,
    ) -> Result<Self> {
        let n = matrix.order();
        check_dims(n, rhs.len())?;
        check_dims(n, x0.len())?;
        if let Some(x) = &reference_solution {
            check_dims(n, x.len())?;
        }
        Ok(CgProblem {
            matrix,
            rhs,
            x0,
            reference_solution,
        })
    }

    /// Zero initial guess.
    pub fn from_rhs(matrix: SpdMatrix, rhs: DenseVector, reference: Option<DenseVector>) -> Result<Self> {
        let x0 = DenseVector::zeros(matrix.order())?;
        Self::new(matrix, rhs, x0, reference)
    }

    pub fn order(&self) -> usize {
        self.matrix.order()
    }
}

/// One iteration's diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgTraceRecord {
    pub k: usize,
    /// Step length that produced `x_k` (`alpha_{k-1}`); zero at `k = 0`.
    pub alpha: f64,
    /// `‖r_k‖`, recursive residual.
    pub rnorm: f64,
    /// `‖s_k‖`, true residual. NaN on iterations where it was not computed.
    pub snorm: f64,
    /// `‖s_k − r_k‖`. NaN when `snorm` is.
    pub gap: f64,
    pub enorm2: Option<f64>,
    #[serde(rename = "enormA")]
    pub enorm_a: Option<f64>,
    /// `‖r_{k−1} − r_k‖ / ‖r_{k−1}‖`, for `k ≥ 1`.
    pub dr_ratio: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CgRunResult {
    pub trace: Vec<CgTraceRecord>,
    pub verdict: StoppingVerdict,
    pub final_x: DenseVector,
    pub stop_index: usize,
    pub model: RoundingModel,
}

impl CgRunResult {
    pub fn last(&self) -> &CgTraceRecord {
        self.trace.last().expect("trace always holds the initial record")
    }

    pub fn series(&self, f: impl Fn(&CgTraceRecord) -> f64) -> Vec<f64> {
        self.trace.iter().map(f).collect()
    }
}

/// Iteration state `(x_k, r_k, p_k)` with values representable in the
/// model, plus the cached `(r_k, r_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CgState {
    pub k: usize,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    rr: f64,
}

impl CgState {
    /// `r_0 = p_0 = b - A x_0`. `a`, `b` and `x0` must be representable in
    /// the model (see [`SpdMatrix::rounded`]).
    pub fn initial(a: &SpdMatrix, b: &[f64], x0: &[f64], model: RoundingModel) -> Self {
        let mut r = vec![0.0; b.len()];
        residual_in(a, b, x0, model, &mut r);
        let rr = dot_in(model, &r, &r);
        CgState {
            k: 0,
            x: x0.to_vec(),
            p: r.clone(),
            r,
            rr,
        }
    }

    pub fn rr(&self) -> f64 {
        self.rr
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CgStep {
    Advanced {
        next: CgState,
        alpha: f64,
        beta: f64,
        /// The correction `alpha_k p_k` as rounded in the model.
        delta_x: Vec<f64>,
    },
    /// `r_k` is exactly zero; no step is defined.
    AlreadyConverged,
}

/// `(p_k, A p_k) <= 0`: the matrix is not positive definite along `p_k`, or
/// the recursion broke down numerically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Breakdown {
    pub curvature: f64,
}

/// One Hestenes-Stiefel step. `a` must be representable in the model.
pub fn cg_step(
    state: &CgState,
    a: &SpdMatrix,
    model: RoundingModel,
) -> std::result::Result<CgStep, Breakdown> {
    let n = state.x.len();
    if state.rr == 0.0 {
        return Ok(CgStep::AlreadyConverged);
    }
    let mut ap = vec![0.0; n];
    a.apply_in(model, &state.p, &mut ap);
    let pap = dot_in(model, &state.p, &ap);
    if !(pap > 0.0) || !pap.is_finite() {
        return Err(Breakdown { curvature: pap });
    }
    let alpha = model.div(state.rr, pap);

    let mut x = Vec::with_capacity(n);
    let mut delta_x = Vec::with_capacity(n);
    for (&xi, &pi) in state.x.iter().zip(&state.p) {
        let d = model.mul(alpha, pi);
        delta_x.push(d);
        x.push(model.add(xi, d));
    }
    let r: Vec<f64> = state
        .r
        .iter()
        .zip(&ap)
        .map(|(&ri, &api)| model.sub(ri, model.mul(alpha, api)))
        .collect();
    let rr = dot_in(model, &r, &r);
    let beta = model.div(rr, state.rr);
    let p = r
        .iter()
        .zip(&state.p)
        .map(|(&ri, &pi)| model.add(ri, model.mul(beta, pi)))
        .collect();
    if x.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Breakdown { curvature: pap });
    }
    Ok(CgStep::Advanced {
        next: CgState {
            k: state.k + 1,
            x,
            r,
            p,
            rr,
        },
        alpha,
        beta,
        delta_x,
    })
}

fn residual_in(a: &SpdMatrix, b: &[f64], x: &[f64], model: RoundingModel, out: &mut [f64]) {
    a.apply_in(model, x, out);
    for (o, &bi) in out.iter_mut().zip(b) {
        *o = model.sub(bi, *o);
    }
}

/// `s = b - A x`, evaluated from the iterate.
pub fn true_residual(
    a: &SpdMatrix,
    b: &DenseVector,
    x: &DenseVector,
    model: RoundingModel,
) -> Result<DenseVector> {
    check_dims(a.order(), b.len())?;
    check_dims(a.order(), x.len())?;
    let a = a.rounded(model);
    let b = round_slice(model, b.as_slice());
    let x = round_slice(model, x.as_slice());
    let mut s = vec![0.0; a.order()];
    residual_in(&a, &b, &x, model, &mut s);
    DenseVector::new(s).map_err(|_| Error::Arithmetic("overflow in true residual".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub max_iters: usize,
    /// Recompute the true residual on iterations that are multiples of
    /// this (1 = every iteration).
    pub true_residual_every: usize,
}

impl RunOptions {
    pub fn new(max_iters: usize) -> Self {
        RunOptions {
            max_iters,
            true_residual_every: 1,
        }
    }
}

pub fn run_cg(
    problem: &CgProblem,
    model: RoundingModel,
    criteria: &CriteriaSet,
    max_iters: usize,
) -> Result<CgRunResult> {
    run_cg_with(problem, model, criteria, RunOptions::new(max_iters))
}

pub fn run_cg_with(
    problem: &CgProblem,
    model: RoundingModel,
    criteria: &CriteriaSet,
    opts: RunOptions,
) -> Result<CgRunResult> {
    if opts.max_iters == 0 {
        return Err(Error::usage("max_iters must be at least 1"));
    }
    if opts.true_residual_every == 0 {
        return Err(Error::usage("true residual cadence must be at least 1"));
    }
    let n = problem.order();
    let a = problem.matrix.rounded(model);
    let b = round_slice(model, problem.rhs.as_slice());
    let xstar = problem
        .reference_solution
        .as_ref()
        .map(|x| round_slice(model, x.as_slice()));
    let bnorm = norm2(&b);
    let eps_m = model.eps_m();

    let mut rec = Recorder {
        a: &a,
        energy: &problem.matrix,
        b: &b,
        xstar: xstar.as_deref(),
        model,
        every: opts.true_residual_every,
        s: vec![0.0; n],
    };

    let mut state = CgState::initial(&a, &b, &round_slice(model, problem.x0.as_slice()), model);
    let mut trace = vec![rec.record(&state, 0.0, None)?];
    let mut prev_x: Vec<f64> = Vec::new();
    let mut delta_x: Vec<f64> = Vec::new();

    let finish = |trace: Vec<CgTraceRecord>, verdict: StoppingVerdict, x: Vec<f64>| {
        let stop_index = trace.len() - 1;
        Ok(CgRunResult {
            trace,
            verdict,
            final_x: DenseVector::new(x)?,
            stop_index,
            model,
        })
    };

    loop {
        let k = state.k;
        if k >= 1 {
            let cur = &trace[k];
            let ctx = StepContext {
                k,
                n,
                rnorm: cur.rnorm,
                rnorm_prev: trace[k - 1].rnorm,
                snorm: (!cur.snorm.is_nan()).then_some(cur.snorm),
                gap: (!cur.gap.is_nan()).then_some(cur.gap),
                bnorm,
                eps_m,
                x_prev: &prev_x,
                delta_x: &delta_x,
            };
            if let Some(verdict) = criteria.evaluate(&ctx) {
                return finish(trace, verdict, state.x);
            }
        }
        if k >= opts.max_iters {
            let last = &trace[k];
            let verdict = StoppingVerdict::new(VerdictKind::Exhausted, k)
                .with("max_iters", opts.max_iters as f64)
                .with("rnorm", last.rnorm)
                .with("snorm", last.snorm);
            return finish(trace, verdict, state.x);
        }
        match cg_step(&state, &a, model) {
            Ok(CgStep::Advanced {
                next,
                alpha,
                delta_x: dx,
                ..
            }) => {
                let r_prev = std::mem::take(&mut state.r);
                prev_x = std::mem::take(&mut state.x);
                delta_x = dx;
                state = next;
                trace.push(rec.record(&state, alpha, Some(&r_prev))?);
            }
            Ok(CgStep::AlreadyConverged) => {
                let verdict = StoppingVerdict::new(VerdictKind::RecursiveCollapse, k)
                    .with("rnorm", 0.0)
                    .with("rnorm_prev", if k > 0 { trace[k - 1].rnorm } else { 0.0 })
                    .with("eps_m", eps_m);
                return finish(trace, verdict, state.x);
            }
            Err(Breakdown { curvature }) => {
                let verdict =
                    StoppingVerdict::new(VerdictKind::Breakdown, k).with("curvature", curvature);
                let partial = finish(trace, verdict, state.x)?;
                return Err(Error::Breakdown {
                    iteration: k,
                    curvature,
                    partial: Box::new(partial),
                });
            }
        }
    }
}

struct Recorder<'a> {
    a: &'a SpdMatrix,
    /// Unrounded problem matrix, used for the energy norm of the error.
    energy: &'a SpdMatrix,
    b: &'a [f64],
    xstar: Option<&'a [f64]>,
    model: RoundingModel,
    every: usize,
    s: Vec<f64>,
}

impl Recorder<'_> {
    fn record(&mut self, st: &CgState, alpha: f64, r_prev: Option<&[f64]>) -> Result<CgTraceRecord> {
        let rnorm = norm2(&st.r);
        let (snorm, gap) = if st.k.is_multiple_of(self.every) {
            residual_in(self.a, self.b, &st.x, self.model, &mut self.s);
            let diff: Vec<f64> = self.s.iter().zip(&st.r).map(|(s, r)| s - r).collect();
            (norm2(&self.s), norm2(&diff))
        } else {
            (f64::NAN, f64::NAN)
        };
        let (enorm2, enorm_a) = match self.xstar {
            Some(xs) => {
                let e: Vec<f64> = xs
                    .iter()
                    .zip(&st.x)
                    .map(|(&a, &b)| self.model.sub(a, b))
                    .collect();
                // absent when the input matrix turns out not to be positive
                // definite; the run itself reports that through breakdown
                (Some(norm2(&e)), norm_a(self.energy, &e).ok())
            }
            None => (None, None),
        };
        let dr_ratio = r_prev.map(|rp| {
            let d: Vec<f64> = rp.iter().zip(&st.r).map(|(a, b)| a - b).collect();
            norm2(&d) / norm2(rp)
        });
        Ok(CgTraceRecord {
            k: st.k,
            alpha,
            rnorm,
            snorm,
            gap,
            enorm2,
            enorm_a,
            dr_ratio,
        })
    }
}
