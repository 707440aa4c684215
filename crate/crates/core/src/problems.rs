//! SPD test problems with controlled spectra.
//!
//! Every generated problem carries its reference solution `x*`. The
//! right-hand side is `b = A x*` accumulated in double-double and rounded
//! once, so the stored `x*` is accurate to working precision for the system
//! actually solved.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cg::CgProblem;
use crate::dd::DoubleDouble;
use crate::error::{Error, Result};
use crate::linalg::{DenseVector, SpdMatrix, SpectralInfo};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    /// `diag(λ_i)`, `λ_i = κ^{(i−1)/(n−1)}`.
    DiagGeometric { kappa: f64, n: usize },
    /// `tridiag(−1, 2, −1)`.
    Laplacian1d { n: usize },
    /// 5-point Laplacian on a `grid × grid` interior mesh.
    Laplacian2d { grid: usize },
    /// `MᵀM + I` with small random integer `M`; integer `x*`. Suited to the
    /// exact oracle.
    IntegerSpd { n: usize },
    /// `Q diag(λ) Qᵀ` with seeded random orthogonal `Q` and the geometric
    /// spectrum of `DiagGeometric`.
    DenseSpd { kappa: f64, n: usize },
    /// Dense and seeded like `DenseSpd`, with the spectrum split into two
    /// tight clusters at the ends of `[1, κ]`. CG reaches its attainable
    /// accuracy within a few dozen steps even for extreme `κ`.
    TwoCluster { kappa: f64, n: usize },
}

impl Family {
    pub fn order(&self) -> usize {
        match *self {
            Family::DiagGeometric { n, .. }
            | Family::Laplacian1d { n }
            | Family::IntegerSpd { n }
            | Family::DenseSpd { n, .. }
            | Family::TwoCluster { n, .. } => n,
            Family::Laplacian2d { grid } => grid * grid,
        }
    }

    /// Families whose output depends on the seed.
    pub fn is_seeded(&self) -> bool {
        matches!(
            self,
            Family::IntegerSpd { .. } | Family::DenseSpd { .. } | Family::TwoCluster { .. }
        )
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::DiagGeometric { kappa, n } => write!(f, "diag-geometric:{kappa:e}:{n}"),
            Family::Laplacian1d { n } => write!(f, "laplacian-1d:{n}"),
            Family::Laplacian2d { grid } => write!(f, "laplacian-2d:{grid}"),
            Family::IntegerSpd { n } => write!(f, "integer-spd:{n}"),
            Family::DenseSpd { kappa, n } => write!(f, "dense-spd:{kappa:e}:{n}"),
            Family::TwoCluster { kappa, n } => write!(f, "two-cluster:{kappa:e}:{n}"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    /// `diag-geometric:<kappa>:<n>`, `laplacian-1d:<n>`,
    /// `laplacian-2d:<grid>`, `integer-spd:<n>`, `dense-spd:<kappa>:<n>`,
    /// `two-cluster:<kappa>:<n>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::usage(format!("invalid generator {s:?}"));
        let size = |t: &str| -> Result<usize> {
            let n: usize = t.parse().map_err(|_| bad())?;
            if n == 0 {
                return Err(Error::usage(format!("generator size must be at least 1 in {s:?}")));
            }
            Ok(n)
        };
        let kappa = |t: &str| -> Result<f64> {
            let k: f64 = t.parse().map_err(|_| bad())?;
            if !(k >= 1.0 && k.is_finite()) {
                return Err(Error::usage(format!("condition number must be >= 1 in {s:?}")));
            }
            Ok(k)
        };
        match parts.as_slice() {
            ["diag-geometric", k, n] => Ok(Family::DiagGeometric { kappa: kappa(k)?, n: size(n)? }),
            ["laplacian-1d", n] => Ok(Family::Laplacian1d { n: size(n)? }),
            ["laplacian-2d", g] => Ok(Family::Laplacian2d { grid: size(g)? }),
            ["integer-spd", n] => Ok(Family::IntegerSpd { n: size(n)? }),
            ["dense-spd", k, n] => Ok(Family::DenseSpd { kappa: kappa(k)?, n: size(n)? }),
            ["two-cluster", k, n] => Ok(Family::TwoCluster { kappa: kappa(k)?, n: size(n)? }),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Family {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        GeneratorSpec { family, seed }
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedProblem {
    pub spec: GeneratorSpec,
    pub problem: CgProblem,
    /// Exact extremal eigenvalues for spectral families.
    pub spectrum: Option<SpectralInfo>,
}

pub fn generate(spec: GeneratorSpec) -> Result<GeneratedProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (matrix, xstar, spectrum) = match spec.family {
        Family::DiagGeometric { kappa, n } => {
            let lambda = geometric_spectrum(kappa, n);
            let s = SpectralInfo::new(1.0, kappa)?;
            let m = SpdMatrix::diagonal(&lambda)?.with_known_spectrum(s)?;
            (m, vec![1.0; n], Some(s))
        }
        Family::Laplacian1d { n } => {
            let mut e = Vec::with_capacity(2 * n);
            for i in 0..n {
                e.push((i, i, 2.0));
                if i > 0 {
                    e.push((i, i - 1, -1.0));
                }
            }
            let h = PI / (n + 1) as f64;
            let s = SpectralInfo::new(2.0 - 2.0 * h.cos(), 2.0 - 2.0 * (n as f64 * h).cos())?;
            let m = SpdMatrix::from_lower_triplets(n, &e)?.with_known_spectrum(s)?;
            (m, vec![1.0; n], Some(s))
        }
        Family::Laplacian2d { grid } => {
            let n = grid * grid;
            let mut e = Vec::with_capacity(3 * n);
            for gi in 0..grid {
                for gj in 0..grid {
                    let i = gi * grid + gj;
                    e.push((i, i, 4.0));
                    if gj > 0 {
                        e.push((i, i - 1, -1.0));
                    }
                    if gi > 0 {
                        e.push((i, i - grid, -1.0));
                    }
                }
            }
            let h = PI / (grid + 1) as f64;
            let s = SpectralInfo::new(4.0 - 4.0 * h.cos(), 4.0 - 4.0 * (grid as f64 * h).cos())?;
            let m = SpdMatrix::from_lower_triplets(n, &e)?.with_known_spectrum(s)?;
            (m, vec![1.0; n], Some(s))
        }
        Family::IntegerSpd { n } => {
            let (a, x) = integer_spd(n, &mut rng);
            let m = SpdMatrix::from_dense(n, a.iter().map(|&v| v as f64).collect())?;
            (m, x.iter().map(|&v| v as f64).collect(), None)
        }
        Family::DenseSpd { kappa, n } | Family::TwoCluster { kappa, n } => {
            let q = random_orthogonal(n, &mut rng);
            let lambda = if matches!(spec.family, Family::DenseSpd { .. }) {
                geometric_spectrum(kappa, n)
            } else {
                two_cluster_spectrum(kappa, n)
            };
            let data = conjugate_diagonal(&q, &lambda);
            let s = SpectralInfo::new(1.0, kappa)?;
            let m = SpdMatrix::from_dense(n, data)?.with_known_spectrum(s)?;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            (m, x, Some(s))
        }
    };
    let b = matrix.apply_extended(&xstar);
    let problem = CgProblem::from_rhs(matrix, DenseVector::new(b)?, Some(DenseVector::new(xstar)?))?;
    Ok(GeneratedProblem {
        spec,
        problem,
        spectrum,
    })
}

/// `κ^{i/(n−1)}` for `i = 0..n`, with both ends exact.
pub fn geometric_spectrum(kappa: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let mut l: Vec<f64> = (0..n)
        .map(|i| kappa.powf(i as f64 / (n - 1) as f64))
        .collect();
    l[0] = 1.0;
    l[n - 1] = kappa;
    l
}

/// Fraction of the log-spectrum each cluster of [`two_cluster_spectrum`]
/// spans.
pub const CLUSTER_LOG_WIDTH: f64 = 0.02;

/// Ascending; the lower half is `κ^{c t}` and the upper half `κ^{1 − c t}`
/// for `t` evenly spaced in `[0, 1]` and `c` = [`CLUSTER_LOG_WIDTH`]. Both
/// ends are exact.
pub fn two_cluster_spectrum(kappa: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let lo = n.div_ceil(2);
    let hi = n - lo;
    let t = |i: usize, m: usize| if m <= 1 { 0.0 } else { i as f64 / (m - 1) as f64 };
    let mut l: Vec<f64> = (0..lo)
        .map(|i| kappa.powf(CLUSTER_LOG_WIDTH * t(i, lo)))
        .chain((0..hi).rev().map(|j| kappa.powf(1.0 - CLUSTER_LOG_WIDTH * t(j, hi))))
        .collect();
    l[0] = 1.0;
    l[n - 1] = kappa;
    l
}

/// Row-major integer `MᵀM + I` and an integer solution with entries in
/// `-3..=3` (not all zero).
pub fn integer_spd(n: usize, rng: &mut impl Rng) -> (Vec<i64>, Vec<i64>) {
    let m: Vec<i64> = (0..n * n).map(|_| rng.random_range(-2..=2)).collect();
    let mut a = vec![0i64; n * n];
    for i in 0..n {
        for j in 0..n {
            let s: i64 = (0..n).map(|k| m[k * n + i] * m[k * n + j]).sum();
            a[i * n + j] = s + i64::from(i == j);
        }
    }
    let mut x: Vec<i64> = (0..n).map(|_| rng.random_range(-3..=3)).collect();
    if x.iter().all(|&v| v == 0) {
        x[0] = 1;
    }
    (a, x)
}

/// Haar-distributed orthogonal matrix from the Householder QR of a
/// Gaussian matrix, with the signs of `R`'s diagonal folded into `Q`.
fn random_orthogonal(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut a: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut signs = vec![1.0; n];
    for k in 0..n {
        let mut v: Vec<f64> = (k..n).map(|i| a[i * n + k]).collect();
        let alpha = crate::linalg::norm2(&v);
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        // R_kk = -sign * alpha
        signs[k] = -sign;
        v[0] += sign * alpha;
        let vn = crate::linalg::norm2(&v);
        if vn > 0.0 {
            v.iter_mut().for_each(|x| *x /= vn);
            for j in k..n {
                let d: f64 = (k..n).map(|i| v[i - k] * a[i * n + j]).sum();
                for i in k..n {
                    a[i * n + j] -= 2.0 * v[i - k] * d;
                }
            }
        }
        reflectors.push(v);
    }
    // Q = H_0 H_1 ... H_{n-1}, applied to the identity from the right end
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &reflectors[k];
        for j in 0..n {
            let d: f64 = (k..n).map(|i| v[i - k] * q[i * n + j]).sum();
            for i in k..n {
                q[i * n + j] -= 2.0 * v[i - k] * d;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] *= signs[j];
        }
    }
    q
}

/// Row-major `Q diag(λ) Qᵀ`, each entry accumulated in double-double and
/// mirrored so the result is exactly symmetric.
fn conjugate_diagonal(q: &[f64], lambda: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = DoubleDouble::ZERO;
            for (k, &l) in lambda.iter().enumerate() {
                acc = acc.add_dd(DoubleDouble::product(q[i * n + k] * q[j * n + k], l));
            }
            let v = acc.to_f64();
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{estimate_spectrum, spectral_info};

    fn gen(s: &str, seed: u64) -> GeneratedProblem {
        generate(GeneratorSpec::new(s.parse().unwrap(), seed)).unwrap()
    }

    #[test]
    fn degenerate_kappa_is_identity() {
        let g = gen("diag-geometric:1:5", 0);
        assert_eq!(g.spectrum.unwrap().kappa, 1.0);
        for i in 0..5 {
            assert_eq!(g.problem.matrix.get(i, i), 1.0);
        }
    }

    #[test]
    fn geometric_kappa_metadata() {
        for kappa in [1e2, 1e6, 1e12] {
            let g = gen(&format!("diag-geometric:{kappa}:50"), 0);
            let s = spectral_info(&g.problem.matrix).unwrap();
            assert!((s.kappa / kappa - 1.0).abs() <= 1e-12);
            let a = &g.problem.matrix;
            assert_eq!(a.get(0, 0), 1.0);
            assert_eq!(a.get(49, 49), kappa);
        }
    }

    #[test]
    fn laplacian_1d_spectrum() {
        let g = gen("laplacian-1d:4", 0);
        let s = g.spectrum.unwrap();
        assert!((s.lambda_min - (2.0 - 2.0 * (PI / 5.0).cos())).abs() < 1e-15);
        let est = estimate_spectrum(&g.problem.matrix).unwrap();
        assert!((est.lambda_min / s.lambda_min - 1.0).abs() < 1e-6);
        assert!((est.lambda_max / s.lambda_max - 1.0).abs() < 1e-6);
        assert_eq!(g.problem.matrix.get(1, 0), -1.0);
        assert_eq!(g.problem.matrix.get(1, 1), 2.0);
        assert_eq!(g.problem.matrix.get(2, 0), 0.0);
    }

    #[test]
    fn laplacian_2d_spectrum() {
        let g = gen("laplacian-2d:6", 0);
        let s = g.spectrum.unwrap();
        let est = estimate_spectrum(&g.problem.matrix).unwrap();
        assert!((est.lambda_min / s.lambda_min - 1.0).abs() < 1e-6, "{est:?} {s:?}");
        assert!((est.lambda_max / s.lambda_max - 1.0).abs() < 1e-6, "{est:?} {s:?}");
    }

    #[test]
    fn dense_spd_spectrum_by_eigen_iteration() {
        let g = gen("dense-spd:100:8", 7);
        let est = estimate_spectrum(&g.problem.matrix).unwrap();
        assert!((est.lambda_min - 1.0).abs() < 0.01, "{est:?}");
        assert!((est.lambda_max / 100.0 - 1.0).abs() < 0.01, "{est:?}");
    }

    #[test]
    fn two_cluster_spectrum_shape() {
        for n in [1, 2, 3, 10, 11] {
            let l = two_cluster_spectrum(1e12, n);
            assert_eq!(l.len(), n);
            assert_eq!(l[0], 1.0);
            assert_eq!(l[n - 1], if n == 1 { 1.0 } else { 1e12 });
            assert!(l.windows(2).all(|w| w[0] <= w[1]), "{l:?}");
        }
        let l = two_cluster_spectrum(1e12, 10);
        assert!(l[4] < 2.0 && l[5] > 5e11, "{l:?}");
        assert!(two_cluster_spectrum(1.0, 6).iter().all(|&v| v == 1.0));
        let g = gen("two-cluster:1e4:12", 2);
        let est = estimate_spectrum(&g.problem.matrix).unwrap();
        assert!((est.lambda_min - 1.0).abs() < 0.01 && (est.lambda_max / 1e4 - 1.0).abs() < 0.01, "{est:?}");
    }

    #[test]
    fn orthogonal_factor_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 12;
        let q = random_orthogonal(n, &mut rng);
        for i in 0..n {
            for j in 0..n {
                let d: f64 = (0..n).map(|k| q[k * n + i] * q[k * n + j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((d - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rhs_is_consistent_with_reference() {
        let g = gen("dense-spd:1e6:30", 3);
        let xs = g.problem.reference_solution.as_ref().unwrap();
        let mut ax = vec![0.0; 30];
        g.problem.matrix.apply(xs.as_slice(), &mut ax);
        for (a, b) in ax.iter().zip(g.problem.rhs.as_slice()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        assert!(xs.as_slice().iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn integer_family_is_exact() {
        let g = gen("integer-spd:6", 42);
        let a = &g.problem.matrix;
        let xs = g.problem.reference_solution.as_ref().unwrap();
        for i in 0..6 {
            let s: f64 = (0..6).map(|j| a.get(i, j) * xs[j]).sum();
            assert_eq!(s, g.problem.rhs[i]);
            for j in 0..6 {
                assert_eq!(a.get(i, j).fract(), 0.0);
            }
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = gen("dense-spd:1e4:20", 9);
        let b = gen("dense-spd:1e4:20", 9);
        let c = gen("dense-spd:1e4:20", 10);
        assert_eq!(a.problem.matrix, b.problem.matrix);
        assert_eq!(a.problem.rhs, b.problem.rhs);
        assert_ne!(a.problem.matrix, c.problem.matrix);
    }

    #[test]
    fn family_strings() {
        for s in [
            "diag-geometric:1e8:100",
            "laplacian-1d:4",
            "laplacian-2d:3",
            "integer-spd:5",
            "dense-spd:100:8",
            "two-cluster:1e12:9",
        ] {
            let f: Family = s.parse().unwrap();
            assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
        }
        for bad in ["", "diag-geometric:0.5:10", "laplacian-1d:0", "banana:3", "dense-spd:10"] {
            assert!(bad.parse::<Family>().is_err(), "{bad}");
        }
        assert_eq!("laplacian-2d:3".parse::<Family>().unwrap().order(), 9);
    }
}
