//! Exact conjugate gradient over arbitrary-precision rationals.
//!
//! In exact arithmetic the recursive and true residuals coincide, residuals
//! are mutually orthogonal, the energy norm of the error strictly decreases
//! and the method terminates in at most `n` steps. This module runs CG with
//! no rounding at all so those identities can be asserted with zero
//! tolerance. All norm comparisons are done on squared norms.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::cg::CgTraceRecord;
use crate::error::{check_dims, Error, Result};
use crate::linalg::SpdMatrix;

pub type Rational = BigRational;

pub fn rational(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Dense symmetric rational matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalMatrix {
    order: usize,
    data: Vec<Rational>,
}

impl RationalMatrix {
    pub fn new(order: usize, data: Vec<Rational>) -> Result<Self> {
        if order == 0 {
            return Err(Error::usage("matrix order must be at least 1"));
        }
        check_dims(order * order, data.len())?;
        for i in 0..order {
            for j in 0..i {
                if data[i * order + j] != data[j * order + i] {
                    return Err(Error::usage(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(RationalMatrix { order, data })
    }

    pub fn from_integers(order: usize, entries: &[i64]) -> Result<Self> {
        Self::new(order, entries.iter().map(|&v| rational(v)).collect())
    }

    /// Exact conversion; every finite binary64 value is a rational.
    pub fn from_spd(a: &SpdMatrix) -> Self {
        RationalMatrix {
            order: a.order(),
            data: a.to_dense().iter().map(|&v| exact(v)).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.order + j]
    }

    pub fn apply(&self, v: &[Rational]) -> Vec<Rational> {
        self.data
            .chunks_exact(self.order)
            .map(|row| dot(row, v))
            .collect()
    }
}

/// Exact value of a finite double.
pub fn exact(x: f64) -> Rational {
    Rational::from_float(x).expect("finite value")
}

pub fn exact_vec(v: &[f64]) -> Vec<Rational> {
    v.iter().map(|&x| exact(x)).collect()
}

pub fn dot(u: &[Rational], v: &[Rational]) -> Rational {
    u.iter().zip(v).fold(Rational::zero(), |acc, (a, b)| acc + a * b)
}

pub fn norm_sq(v: &[Rational]) -> Rational {
    dot(v, v)
}

pub fn sub(u: &[Rational], v: &[Rational]) -> Vec<Rational> {
    u.iter().zip(v).map(|(a, b)| a - b).collect()
}

/// `b - A x`, exactly.
pub fn residual(a: &RationalMatrix, b: &[Rational], x: &[Rational]) -> Vec<Rational> {
    sub(b, &a.apply(x))
}

/// `v^T A v`, the squared energy norm.
pub fn energy_sq(a: &RationalMatrix, v: &[Rational]) -> Rational {
    dot(v, &a.apply(v))
}

pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Exact CG state. `r == b - A x` holds at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalCgState {
    pub k: usize,
    pub x: Vec<Rational>,
    pub r: Vec<Rational>,
    pub p: Vec<Rational>,
    /// Step length that produced this state; absent at `k = 0`.
    pub alpha: Option<Rational>,
}

/// Runs exact CG until the residual vanishes. Every step certifies
/// `(p, Ap) > 0`; a nonpositive curvature aborts with the offending
/// direction in the error.
pub fn oracle_run(
    a: &RationalMatrix,
    b: &[Rational],
    x0: &[Rational],
) -> Result<Vec<RationalCgState>> {
    let n = a.order();
    check_dims(n, b.len())?;
    check_dims(n, x0.len())?;
    let r = residual(a, b, x0);
    let mut states = vec![RationalCgState {
        k: 0,
        x: x0.to_vec(),
        p: r.clone(),
        r,
        alpha: None,
    }];
    // exact CG terminates within n steps; one extra allows the check to
    // observe a failure rather than loop
    while states.len() <= n + 1 {
        let st = states.last().expect("nonempty");
        if st.r.iter().all(Zero::is_zero) {
            break;
        }
        let ap = a.apply(&st.p);
        let pap = dot(&st.p, &ap);
        if !pap.is_positive() {
            let witness: Vec<String> = st.p.iter().map(|q| q.to_string()).collect();
            return Err(Error::NotPositiveDefinite(format!(
                "(p, Ap) = {pap} at step {} with p = [{}]",
                st.k,
                witness.join(", ")
            )));
        }
        let rr = norm_sq(&st.r);
        let alpha = &rr / &pap;
        let x: Vec<Rational> = st.x.iter().zip(&st.p).map(|(x, p)| x + &alpha * p).collect();
        let r: Vec<Rational> = st.r.iter().zip(&ap).map(|(r, q)| r - &alpha * q).collect();
        let beta = norm_sq(&r) / rr;
        let p = r.iter().zip(&st.p).map(|(r, p)| r + &beta * p).collect();
        let k = st.k + 1;
        states.push(RationalCgState {
            k,
            x,
            r,
            p,
            alpha: Some(alpha),
        });
    }
    Ok(states)
}

/// Exact solution by fraction-free (Bareiss) elimination with row pivoting.
pub fn oracle_solution(a: &RationalMatrix, b: &[Rational]) -> Result<Vec<Rational>> {
    let n = a.order();
    check_dims(n, b.len())?;
    // clear denominators row by row; row scaling leaves the solution alone
    let mut m: Vec<Vec<BigInt>> = (0..n)
        .map(|i| {
            let row: Vec<&Rational> = (0..n).map(|j| a.get(i, j)).chain(std::iter::once(&b[i])).collect();
            let lcm = row
                .iter()
                .fold(BigInt::one(), |l, q| l.lcm(q.denom()));
            row.iter()
                .map(|q| q.numer() * (&lcm / q.denom()))
                .collect()
        })
        .collect();

    let mut prev = BigInt::one();
    for k in 0..n {
        let pivot = (k..n).find(|&i| !m[i][k].is_zero()).ok_or(Error::Singular)?;
        m.swap(k, pivot);
        for i in k + 1..n {
            for j in k + 1..=n {
                let v = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
            m[i][k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }

    let mut x = vec![Rational::zero(); n];
    for i in (0..n).rev() {
        let mut acc = Rational::from_integer(m[i][n].clone());
        for j in i + 1..n {
            acc -= Rational::from_integer(m[i][j].clone()) * &x[j];
        }
        x[i] = acc / Rational::from_integer(m[i][i].clone());
    }
    Ok(x)
}

/// Outcome of the exact identity checks on one oracle run.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct IdentityCheck {
    pub order: usize,
    pub steps: usize,
    /// `r_k = b - A x_k` at every step.
    pub residual_identity: bool,
    /// `(r_j, r_k) = 0` for all `j != k`.
    pub mutual_orthogonality: bool,
    /// `‖e_k‖_A^2` strictly decreasing until it reaches zero.
    pub energy_decrease: bool,
    /// `‖r_k − r_{k+1}‖^2 ≥ ‖r_k‖^2` at every step.
    pub dr_bound: bool,
    /// Terminated with `r = 0` within `n` steps.
    pub terminated: bool,
    /// Final iterate equals the elimination solution.
    pub solution_matches: bool,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.residual_identity
            && self.mutual_orthogonality
            && self.energy_decrease
            && self.dr_bound
            && self.terminated
            && self.solution_matches
    }
}

/// Runs the oracle from `x0 = 0` and checks every exact identity.
pub fn check_identities(a: &RationalMatrix, b: &[Rational]) -> Result<IdentityCheck> {
    let n = a.order();
    let x0 = vec![Rational::zero(); n];
    let states = oracle_run(a, b, &x0)?;
    let xstar = oracle_solution(a, b)?;

    let residual_identity = states.iter().all(|s| s.r == residual(a, b, &s.x));
    let mutual_orthogonality = states.iter().enumerate().all(|(j, sj)| {
        states[j + 1..].iter().all(|sk| dot(&sj.r, &sk.r).is_zero())
    });
    let energies: Vec<Rational> = states
        .iter()
        .map(|s| energy_sq(a, &sub(&xstar, &s.x)))
        .collect();
    let energy_decrease = energies.windows(2).all(|w| w[1] < w[0])
        && energies.last().is_some_and(Zero::is_zero);
    let dr_bound = states
        .windows(2)
        .all(|w| norm_sq(&sub(&w[0].r, &w[1].r)) >= norm_sq(&w[0].r));
    let last = states.last().expect("nonempty");
    let terminated = last.r.iter().all(Zero::is_zero) && last.k <= n;
    Ok(IdentityCheck {
        order: n,
        steps: last.k,
        residual_identity,
        mutual_orthogonality,
        energy_decrease,
        dr_bound,
        terminated,
        solution_matches: last.x == xstar,
    })
}

/// Exact `‖Δr_k‖^2 ≥ ‖r_k‖^2` audit: one `(k, passed)` per step.
pub fn audit_exact_dr(states: &[RationalCgState]) -> Vec<(usize, bool)> {
    states
        .windows(2)
        .map(|w| (w[1].k, norm_sq(&sub(&w[0].r, &w[1].r)) >= norm_sq(&w[0].r)))
        .collect()
}

/// Converts an oracle run into trace records so the trace analytics can be
/// applied to it. Norms are rounded to binary64 only at the end; the gap is
/// computed exactly and is therefore zero.
pub fn oracle_trace(
    a: &RationalMatrix,
    b: &[Rational],
    states: &[RationalCgState],
    reference: Option<&[Rational]>,
) -> Vec<CgTraceRecord> {
    let sqrt_of = |q: &Rational| to_f64(q).sqrt();
    states
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let s = residual(a, b, &st.x);
            let (enorm2, enorm_a) = match reference {
                Some(xs) => {
                    let e = sub(xs, &st.x);
                    (Some(sqrt_of(&norm_sq(&e))), Some(sqrt_of(&energy_sq(a, &e))))
                }
                None => (None, None),
            };
            let dr_ratio = (i > 0).then(|| {
                let prev = &states[i - 1].r;
                let q = norm_sq(&sub(prev, &st.r)) / norm_sq(prev);
                sqrt_of(&q)
            });
            CgTraceRecord {
                k: st.k,
                alpha: st.alpha.as_ref().map(to_f64).unwrap_or(0.0),
                rnorm: sqrt_of(&norm_sq(&st.r)),
                snorm: sqrt_of(&norm_sq(&s)),
                gap: sqrt_of(&norm_sq(&sub(&s, &st.r))),
                enorm2,
                enorm_a,
                dr_ratio,
            }
        })
        .collect()
}
