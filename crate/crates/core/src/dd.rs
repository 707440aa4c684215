//! Double-double accumulation, used wherever a quantity must be formed in
//! roughly twice the working precision (right-hand sides `b = A x*`).

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn add_f64(self, b: f64) -> Self {
        let (s, e) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        DoubleDouble { hi, lo }
    }

    #[inline]
    pub fn add_dd(self, other: DoubleDouble) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        let (t, f) = two_sum(self.lo, other.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }

    /// Exact product of two doubles.
    #[inline]
    pub fn product(a: f64, b: f64) -> Self {
        let p = a * b;
        DoubleDouble {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    /// `self += a * b` with the product formed exactly.
    #[inline]
    pub fn fma_f64(self, a: f64, b: f64) -> Self {
        self.add_dd(DoubleDouble::product(a, b))
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Dot product accumulated in double-double, rounded once at the end.
pub fn dot_extended(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .fold(DoubleDouble::ZERO, |acc, (&a, &b)| acc.fma_f64(a, b))
        .to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_digits() {
        // (1 + 2^-40)(1 - 2^-40) = 1 - 2^-80; the sum below cancels the 1
        let a = 1.0 + (-40f64).exp2();
        let b = 1.0 - (-40f64).exp2();
        let got = DoubleDouble::product(a, b).add_f64(-1.0).to_f64();
        assert_eq!(got, -(-80f64).exp2());
    }

    #[test]
    fn extended_dot_beats_naive_on_cancellation() {
        let u = [1e16, 1.0, -1e16];
        let v = [1.0, 1.0, 1.0];
        let naive: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert_eq!(naive, 0.0);
        assert_eq!(dot_extended(&u, &v), 1.0);
    }
}
