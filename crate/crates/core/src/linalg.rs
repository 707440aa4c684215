//! Vectors, symmetric positive definite operators and the norms built on
//! them.
//!
//! Everything that participates in the solver recursion takes a
//! [`RoundingModel`]: in simulated precision every scalar operation is
//! rounded and sums run strictly left to right, which makes simulated runs
//! bit-reproducible on any platform. Norms are diagnostics and are always
//! measured in native binary64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dd::DoubleDouble;
use crate::error::{check_dims, Error, Result};
use crate::rounding::RoundingModel;

/// Orders up to this size are stored densely unless the pattern is sparse.
pub const DENSE_LIMIT: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::usage("vector must have at least one entry"));
        }
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::usage(format!(
                "vector entry {i} is not finite ({})",
                entries[i]
            )));
        }
        Ok(DenseVector(entries))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n])
    }

    pub fn filled(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|x| x * s).collect())
    }
}

impl AsRef<[f64]> for DenseVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Extremal eigenvalues of an SPD matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
}

impl SpectralInfo {
    pub fn new(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_max >= lambda_min && lambda_max.is_finite()) {
            return Err(Error::usage(format!(
                "invalid spectrum [{lambda_min:e}, {lambda_max:e}]"
            )));
        }
        Ok(SpectralInfo {
            lambda_min,
            lambda_max,
            kappa: lambda_max / lambda_min,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    /// Full row-major `n * n` array.
    Dense(Vec<f64>),
    Csr {
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    },
}

/// A symmetric matrix used as an SPD operator. Symmetry is checked exactly
/// on construction; definiteness is known for generated matrices (through
/// their spectrum) and otherwise discovered by the solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    order: usize,
    storage: Storage,
    known_spectrum: Option<SpectralInfo>,
}

impl SpdMatrix {
    /// Builds from a full row-major array.
    pub fn from_dense(order: usize, data: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::usage("matrix order must be at least 1"));
        }
        check_dims(order * order, data.len())?;
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::usage(format!(
                "matrix entry ({}, {}) is not finite",
                i / order,
                i % order
            )));
        }
        for i in 0..order {
            for j in 0..i {
                if data[i * order + j] != data[j * order + i] {
                    return Err(Error::usage(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let nnz = data.iter().filter(|&&x| x != 0.0).count();
        let storage = if use_dense(order, nnz) {
            Storage::Dense(data)
        } else {
            csr_from_dense(order, &data)
        };
        Ok(SpdMatrix {
            order,
            storage,
            known_spectrum: None,
        })
    }

    /// Builds from lower-triangle entries `(row, col, value)` with
    /// `row >= col`, zero-based. The upper triangle is mirrored. Duplicate
    /// positions are rejected.
    pub fn from_lower_triplets(order: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        if order == 0 {
            return Err(Error::usage("matrix order must be at least 1"));
        }
        let mut full: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * entries.len());
        for &(i, j, v) in entries {
            if i >= order || j >= order {
                return Err(Error::usage(format!(
                    "entry ({i}, {j}) outside matrix of order {order}"
                )));
            }
            if j > i {
                return Err(Error::usage(format!(
                    "entry ({i}, {j}) is above the diagonal"
                )));
            }
            if !v.is_finite() {
                return Err(Error::usage(format!("entry ({i}, {j}) is not finite")));
            }
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        full.sort_by_key(|&(i, j, _)| (i, j));
        if let Some(w) = full.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::usage(format!(
                "duplicate entry at ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let nnz = full.iter().filter(|e| e.2 != 0.0).count();
        let storage = if use_dense(order, nnz) {
            let mut data = vec![0.0; order * order];
            for (i, j, v) in full {
                data[i * order + j] = v;
            }
            Storage::Dense(data)
        } else {
            let mut row_ptr = vec![0usize; order + 1];
            let mut col_idx = Vec::with_capacity(nnz);
            let mut values = Vec::with_capacity(nnz);
            for (i, j, v) in full.into_iter().filter(|e| e.2 != 0.0) {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
            }
            for i in 0..order {
                row_ptr[i + 1] += row_ptr[i];
            }
            Storage::Csr {
                row_ptr,
                col_idx,
                values,
            }
        };
        Ok(SpdMatrix {
            order,
            storage,
            known_spectrum: None,
        })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let entries: Vec<_> = diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_lower_triplets(diag.len(), &entries)
    }

    pub fn identity(order: usize) -> Result<Self> {
        let m = Self::diagonal(&vec![1.0; order])?;
        m.with_known_spectrum(SpectralInfo::new(1.0, 1.0)?)
    }

    /// Attaches an exactly known spectrum (generated matrices).
    pub fn with_known_spectrum(mut self, spectrum: SpectralInfo) -> Result<Self> {
        self.known_spectrum = Some(spectrum);
        Ok(self)
    }

    pub fn known_spectrum(&self) -> Option<SpectralInfo> {
        self.known_spectrum
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// Stored nonzeros in the full (both triangles) pattern.
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(d) => d.iter().filter(|&&x| x != 0.0).count(),
            Storage::Csr { values, .. } => values.len(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(d) => d[i * self.order + j],
            Storage::Csr {
                row_ptr,
                col_idx,
                values,
            } => {
                let row = row_ptr[i]..row_ptr[i + 1];
                match col_idx[row.clone()].binary_search(&j) {
                    Ok(pos) => values[row.start + pos],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Nonzero lower-triangle entries in row-major order.
    pub fn lower_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.order {
            self.for_row(i, |j, v| {
                if j <= i && v != 0.0 {
                    out.push((i, j, v));
                }
            });
        }
        out
    }

    /// Full row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.order;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            self.for_row(i, |j, v| d[i * n + j] = v);
        }
        d
    }

    #[inline]
    fn for_row(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        match &self.storage {
            Storage::Dense(d) => {
                let n = self.order;
                for (j, &v) in d[i * n..(i + 1) * n].iter().enumerate() {
                    f(j, v);
                }
            }
            Storage::Csr {
                row_ptr,
                col_idx,
                values,
            } => {
                for k in row_ptr[i]..row_ptr[i + 1] {
                    f(col_idx[k], values[k]);
                }
            }
        }
    }

    /// Copy with every entry rounded to the model. Symmetry is preserved
    /// because mirrored entries round identically.
    pub fn rounded(&self, model: RoundingModel) -> SpdMatrix {
        if model.is_native() {
            return self.clone();
        }
        let storage = match &self.storage {
            Storage::Dense(d) => Storage::Dense(d.iter().map(|&x| model.round(x)).collect()),
            Storage::Csr {
                row_ptr,
                col_idx,
                values,
            } => Storage::Csr {
                row_ptr: row_ptr.clone(),
                col_idx: col_idx.clone(),
                values: values.iter().map(|&x| model.round(x)).collect(),
            },
        };
        SpdMatrix {
            order: self.order,
            storage,
            known_spectrum: self.known_spectrum,
        }
    }

    /// `out = A v` in the model with rows summed left to right. Entries and
    /// `v` must already be representable in the model.
    pub(crate) fn apply_in(&self, model: RoundingModel, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.order);
        debug_assert_eq!(out.len(), self.order);
        if model.is_native() {
            return self.apply(v, out);
        }
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            self.for_row(i, |j, a| {
                if a != 0.0 {
                    acc = model.add(acc, model.mul(a, v[j]));
                }
            });
            *o = acc;
        }
    }

    /// `out = A v` in binary64.
    pub(crate) fn apply(&self, v: &[f64], out: &mut [f64]) {
        match &self.storage {
            Storage::Dense(d) => {
                let n = self.order;
                for (o, row) in out.iter_mut().zip(d.chunks_exact(n)) {
                    *o = row.iter().zip(v).fold(0.0, |acc, (a, x)| acc + a * x);
                }
            }
            Storage::Csr {
                row_ptr,
                col_idx,
                values,
            } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        acc += values[k] * v[col_idx[k]];
                    }
                    *o = acc;
                }
            }
        }
    }

    /// `A v` accumulated in double-double and rounded once per entry.
    pub fn apply_extended(&self, v: &[f64]) -> Vec<f64> {
        (0..self.order)
            .map(|i| {
                let mut acc = DoubleDouble::ZERO;
                self.for_row(i, |j, a| acc = acc.fma_f64(a, v[j]));
                acc.to_f64()
            })
            .collect()
    }

    /// Largest absolute row sum; bounds the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.order)
            .map(|i| {
                let mut s = 0.0;
                self.for_row(i, |_, v| s += v.abs());
                s
            })
            .fold(0.0, f64::max)
    }
}

fn use_dense(order: usize, nnz: usize) -> bool {
    order <= DENSE_LIMIT && nnz * 8 > order * order
}

fn csr_from_dense(order: usize, data: &[f64]) -> Storage {
    let mut row_ptr = Vec::with_capacity(order + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for row in data.chunks_exact(order) {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                col_idx.push(j);
                values.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    Storage::Csr {
        row_ptr,
        col_idx,
        values,
    }
}

// Slice kernels shared with the solver. Inputs are assumed to be
// representable in the model.

pub(crate) fn dot_in(model: RoundingModel, u: &[f64], v: &[f64]) -> f64 {
    if model.is_native() {
        return u.iter().zip(v).fold(0.0, |acc, (a, b)| acc + a * b);
    }
    u.iter()
        .zip(v)
        .fold(0.0, |acc, (&a, &b)| model.add(acc, model.mul(a, b)))
}

pub(crate) fn round_slice(model: RoundingModel, v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| model.round(x)).collect()
}

/// `A v` in the model.
pub fn matvec(a: &SpdMatrix, v: &DenseVector, model: RoundingModel) -> Result<DenseVector> {
    check_dims(a.order(), v.len())?;
    let mut out = vec![0.0; a.order()];
    if model.is_native() {
        a.apply(v.as_slice(), &mut out);
    } else {
        let a = a.rounded(model);
        a.apply_in(model, &round_slice(model, v.as_slice()), &mut out);
    }
    DenseVector::new(out).map_err(|_| Error::Arithmetic("overflow in matrix-vector product".into()))
}

/// `u . v` in the model, summed left to right.
pub fn dot(u: &DenseVector, v: &DenseVector, model: RoundingModel) -> Result<f64> {
    check_dims(u.len(), v.len())?;
    let d = if model.is_native() {
        dot_in(model, u.as_slice(), v.as_slice())
    } else {
        dot_in(
            model,
            &round_slice(model, u.as_slice()),
            &round_slice(model, v.as_slice()),
        )
    };
    Ok(d)
}

/// Euclidean norm, scaled by the largest magnitude so that it neither
/// overflows nor underflows for any finite input.
pub fn norm2(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let ssq = v.iter().fold(0.0, |acc, x| {
        let y = x / scale;
        acc + y * y
    });
    scale * ssq.sqrt()
}

/// Energy norm `sqrt(v^T A v)`. A quadratic form that is negative beyond
/// rounding noise means `A` is not positive definite.
pub fn norm_a(a: &SpdMatrix, v: &[f64]) -> Result<f64> {
    check_dims(a.order(), v.len())?;
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let w: Vec<f64> = v.iter().map(|x| x / scale).collect();
    let mut aw = vec![0.0; w.len()];
    a.apply(&w, &mut aw);
    let q = w.iter().zip(&aw).fold(0.0, |acc, (x, y)| acc + x * y);
    if q >= 0.0 {
        return Ok(scale * q.sqrt());
    }
    // |w|^T |A| |w| bounds the rounding error of the form
    let mut abs_a = vec![0.0; w.len()];
    let wabs: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    for (i, o) in abs_a.iter_mut().enumerate() {
        let mut s = 0.0;
        a.for_row(i, |j, v| s += v.abs() * wabs[j]);
        *o = s;
    }
    let noise: f64 = wabs.iter().zip(&abs_a).map(|(x, y)| x * y).sum::<f64>()
        * 2.0
        * (w.len() as f64)
        * f64::EPSILON;
    if -q <= noise {
        Ok(0.0)
    } else {
        Err(Error::NotPositiveDefinite(format!(
            "negative quadratic form {:e}",
            q * scale * scale
        )))
    }
}

/// Extremal eigenvalues. Generated matrices return their recorded spectrum;
/// others are estimated by power iteration (largest) and inverse iteration
/// (smallest), tolerance 1e-8 on successive Rayleigh quotients.
pub fn spectral_info(a: &SpdMatrix) -> Result<SpectralInfo> {
    if let Some(s) = a.known_spectrum {
        return Ok(s);
    }
    estimate_spectrum(a)
}

const EIG_TOL: f64 = 1e-8;
/// Orders above this use a shifted power iteration instead of a dense
/// Cholesky factorization for the smallest eigenvalue.
const CHOLESKY_LIMIT: usize = 2048;

fn eig_cap(n: usize) -> usize {
    (10 * n).max(200)
}

pub fn estimate_spectrum(a: &SpdMatrix) -> Result<SpectralInfo> {
    let n = a.order();
    if n == 1 {
        let v = a.get(0, 0);
        if v <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!("1x1 matrix [{v:e}]")));
        }
        return SpectralInfo::new(v, v);
    }
    let (lmax, max_ok) = power_iteration(n, |v, out| a.apply(v, out));
    let (lmin, min_ok) = if n <= CHOLESKY_LIMIT {
        let chol = cholesky(n, a.to_dense())?;
        let (mu, ok) = power_iteration(n, |v, out| {
            out.copy_from_slice(v);
            chol_solve(n, &chol, out);
        });
        (1.0 / mu, ok)
    } else {
        let (mu, ok) = power_iteration(n, |v, out| {
            a.apply(v, out);
            for (o, x) in out.iter_mut().zip(v) {
                *o = lmax * x - *o;
            }
        });
        (lmax - mu, ok)
    };
    if !(max_ok && min_ok) {
        return Err(Error::EstimationFailed {
            lambda_min: lmin,
            lambda_max: lmax,
        });
    }
    if lmin <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "estimated smallest eigenvalue {lmin:e}"
        )));
    }
    // both estimates carry rounding noise; on a near-scalar spectrum they
    // can cross by an ulp or two
    SpectralInfo::new(lmin.min(lmax), lmax)
}

/// Power iteration on a symmetric operator; returns the final Rayleigh
/// quotient and whether it converged within the cap.
fn power_iteration(n: usize, mut op: impl FnMut(&[f64], &mut [f64])) -> (f64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; n];
    let mut lambda = f64::NAN;
    for _ in 0..eig_cap(n) {
        op(&v, &mut w);
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let nw = norm2(&w);
        if nw == 0.0 {
            return (0.0, true);
        }
        for (x, y) in v.iter_mut().zip(&w) {
            *x = y / nw;
        }
        if (next - lambda).abs() <= EIG_TOL * next.abs() {
            return (next, true);
        }
        lambda = next;
    }
    (lambda, false)
}

/// Dense lower Cholesky factor, row-major.
fn cholesky(n: usize, mut a: Vec<f64>) -> Result<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "Cholesky pivot {j} is {d:e}"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(a)
}

fn chol_solve(n: usize, l: &[f64], x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}
