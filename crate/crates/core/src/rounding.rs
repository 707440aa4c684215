//! Finite-precision arithmetic context.
//!
//! [`RoundingModel::Double`] is the platform's binary64 arithmetic.
//! [`RoundingModel::Simulated`] keeps `p` significant bits (hidden bit
//! included) and rounds every operation to nearest, ties to even, so its unit
//! roundoff is `2^-p`. `p = 24` reproduces binary32 precision and the native
//! mode corresponds to `p = 53`. The exponent range stays native: there is no
//! simulated overflow, underflow or subnormal behaviour.
//!
//! Simulated operations are correctly rounded. The binary64 result of each
//! operation is paired with its exact error term (two-sum, fma-based
//! two-product, fma remainder for division) so that a tie produced by the
//! first rounding is broken in the direction of the exact result.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 52;
const F64_SIGNIFICAND_BITS: u32 = 53;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RoundingModel {
    #[default]
    Double,
    Simulated { bits: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl RoundingModel {
    pub fn simulated(bits: u32) -> Result<Self> {
        if (MIN_BITS..=MAX_BITS).contains(&bits) {
            Ok(RoundingModel::Simulated { bits })
        } else {
            Err(Error::usage(format!(
                "simulated precision must keep {MIN_BITS}..={MAX_BITS} bits, got {bits}"
            )))
        }
    }

    /// Significant bits kept by this model (53 for native binary64).
    pub fn bits(&self) -> u32 {
        match *self {
            RoundingModel::Double => F64_SIGNIFICAND_BITS,
            RoundingModel::Simulated { bits } => bits,
        }
    }

    /// Unit roundoff: `2^-p`.
    pub fn eps_m(&self) -> f64 {
        (-(self.bits() as f64)).exp2()
    }

    pub fn is_native(&self) -> bool {
        matches!(self, RoundingModel::Double)
    }

    /// Rounds `x` to the nearest value representable in this model.
    ///
    /// Non-finite inputs are passed through unchanged; use
    /// [`round_to_model`] for the checked version.
    #[inline]
    pub fn round(&self, x: f64) -> f64 {
        match *self {
            RoundingModel::Double => x,
            RoundingModel::Simulated { bits } => round_with_tail(x, 0.0, bits),
        }
    }

    // The arithmetic below assumes its operands are already representable
    // in the model (kernels snap their inputs once up front).

    #[inline]
    pub fn add(&self, a: f64, b: f64) -> f64 {
        match *self {
            RoundingModel::Double => a + b,
            RoundingModel::Simulated { bits } => {
                let s = a + b;
                round_with_tail(s, two_sum_err(a, b, s), bits)
            }
        }
    }

    #[inline]
    pub fn sub(&self, a: f64, b: f64) -> f64 {
        self.add(a, -b)
    }

    #[inline]
    pub fn mul(&self, a: f64, b: f64) -> f64 {
        match *self {
            RoundingModel::Double => a * b,
            RoundingModel::Simulated { bits } => {
                let prod = a * b;
                round_with_tail(prod, a.mul_add(b, -prod), bits)
            }
        }
    }

    /// Division; the caller guarantees `b != 0`.
    #[inline]
    pub fn div(&self, a: f64, b: f64) -> f64 {
        match *self {
            RoundingModel::Double => a / b,
            RoundingModel::Simulated { bits } => {
                let q = a / b;
                let rem = (-q).mul_add(b, a);
                let tail = if rem == 0.0 {
                    0.0
                } else {
                    rem.signum() * b.signum()
                };
                round_with_tail(q, tail, bits)
            }
        }
    }

    /// Square root rounded to the model.
    #[inline]
    pub fn sqrt(&self, a: f64) -> f64 {
        match *self {
            RoundingModel::Double => a.sqrt(),
            RoundingModel::Simulated { bits } => {
                let r = a.sqrt();
                let rem = (-r).mul_add(r, a);
                round_with_tail(r, rem, bits)
            }
        }
    }
}

impl fmt::Display for RoundingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundingModel::Double => f.write_str("double"),
            RoundingModel::Simulated { bits } => write!(f, "p:{bits}"),
        }
    }
}

impl FromStr for RoundingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "double" {
            return Ok(RoundingModel::Double);
        }
        let bits = s
            .strip_prefix("p:")
            .ok_or_else(|| Error::usage(format!("unknown precision {s:?} (expected \"double\" or \"p:<bits>\")")))?;
        let bits: u32 = bits
            .parse()
            .map_err(|_| Error::usage(format!("invalid mantissa width in {s:?}")))?;
        RoundingModel::simulated(bits)
    }
}

impl TryFrom<String> for RoundingModel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RoundingModel> for String {
    fn from(m: RoundingModel) -> String {
        m.to_string()
    }
}

/// Checked rounding of a single value to the model.
pub fn round_to_model(x: f64, model: RoundingModel) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::usage(format!("cannot round non-finite value {x}")));
    }
    Ok(model.round(x))
}

/// One arithmetic operation in the model: operands are snapped to the model
/// first, then the exact result is rounded once.
pub fn rounded_op(op: Op, a: f64, b: f64, model: RoundingModel) -> Result<f64> {
    let a = round_to_model(a, model)?;
    let b = round_to_model(b, model)?;
    Ok(match op {
        Op::Add => model.add(a, b),
        Op::Sub => model.sub(a, b),
        Op::Mul => model.mul(a, b),
        Op::Div => {
            if b == 0.0 {
                return Err(Error::Arithmetic("division by zero".into()));
            }
            model.div(a, b)
        }
    })
}

#[inline]
fn two_sum_err(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

/// Rounds `x` to `bits` significant bits, where the exact value being
/// rounded is `x + tail` and `|tail|` is at most half an ulp of `x`.
/// Only the sign of `tail` matters: it breaks ties created by the earlier
/// binary64 rounding.
#[inline]
fn round_with_tail(x: f64, tail: f64, bits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let shift = F64_SIGNIFICAND_BITS - bits;
    let mask = (1u64 << shift) - 1;
    let half = 1u64 << (shift - 1);

    let sign = x.to_bits() & (1 << 63);
    let mag = x.to_bits() & !(1 << 63);
    let rem = mag & mask;
    let base = mag & !mask;

    let round_up = if rem > half {
        true
    } else if rem < half {
        false
    } else if tail != 0.0 {
        // exact value lies beyond the tie when tail points away from zero
        tail.is_sign_negative() == x.is_sign_negative()
    } else {
        (base >> shift) & 1 == 1
    };
    let mag = if round_up { base + (1u64 << shift) } else { base };
    f64::from_bits(sign | mag)
}
