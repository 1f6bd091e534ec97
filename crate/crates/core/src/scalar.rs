use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rand::distributions::uniform::SampleUniform;

/// Floating point scalar the whole crate is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + SampleUniform
    + Send
    + Sync
    + 'static
{
    /// Significant digits needed for a lossless decimal round trip.
    const EXACT_DIGITS: usize;

    /// Converts an `f64` literal, panicking only if the target cannot hold it.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Scientific notation with `EXACT_DIGITS` significant digits.
    fn to_exact_string(self) -> String {
        format!("{:.*e}", Self::EXACT_DIGITS - 1, self)
    }
}

impl Scalar for f32 {
    const EXACT_DIGITS: usize = 9;
}

impl Scalar for f64 {
    const EXACT_DIGITS: usize = 17;
}

/// ln(Σ exp(v)) without overflow. Returns -inf for an empty slice.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_string_round_trips() {
        let x = 0.1_f64 + 0.2;
        let s = x.to_exact_string();
        assert_eq!(s.parse::<f64>().unwrap(), x);
        let y = 1.0_f32 / 3.0;
        assert_eq!(y.to_exact_string().parse::<f32>().unwrap(), y);
    }

    #[test]
    fn log_sum_exp_large_values() {
        let v = [1000.0_f64, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
    }
}
