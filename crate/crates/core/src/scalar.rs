//! Floating-point scalar abstraction used by interval domains.
//!
//! Everything that touches interval bounds is generic over [`Scalar`], which
//! is implemented for `f32` and `f64`. The lattice operations stay exact; the
//! directed-rounding helpers (`next_up`/`next_down`) are what the interval
//! arithmetic in [`crate::functions`] uses to round outward.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::Float;

pub trait Scalar: Float + FromStr + Debug + Display + Default + Send + Sync + 'static {
    /// Number of significant decimal digits needed for an exact round trip.
    const ROUND_TRIP_DIGITS: usize;

    /// Smallest representable value strictly greater than `self`.
    fn next_up(self) -> Self;

    /// Largest representable value strictly smaller than `self`.
    fn next_down(self) -> Self;

    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Distance between `a` and `b` counted in units in the last place.
    /// Returns `u64::MAX` when either side is NaN or the signs of two
    /// infinities differ.
    fn ulps_between(a: Self, b: Self) -> u64;
}

impl Scalar for f64 {
    const ROUND_TRIP_DIGITS: usize = 17;

    fn next_up(self) -> Self {
        f64::next_up(self)
    }

    fn next_down(self) -> Self {
        f64::next_down(self)
    }

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn ulps_between(a: Self, b: Self) -> u64 {
        if a.is_nan() || b.is_nan() {
            return u64::MAX;
        }
        if a == b {
            return 0;
        }
        ordered_bits_f64(a).abs_diff(ordered_bits_f64(b))
    }
}

impl Scalar for f32 {
    const ROUND_TRIP_DIGITS: usize = 9;

    fn next_up(self) -> Self {
        f32::next_up(self)
    }

    fn next_down(self) -> Self {
        f32::next_down(self)
    }

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn ulps_between(a: Self, b: Self) -> u64 {
        if a.is_nan() || b.is_nan() {
            return u64::MAX;
        }
        if a == b {
            return 0;
        }
        ordered_bits_f32(a).abs_diff(ordered_bits_f32(b)) as u64
    }
}

// Maps the IEEE bit pattern onto a monotone integer line so that adjacent
// floats differ by exactly one.
fn ordered_bits_f64(x: f64) -> i64 {
    let bits = x.to_bits() as i64;
    if bits < 0 {
        i64::MIN - bits
    } else {
        bits
    }
}

fn ordered_bits_f32(x: f32) -> i32 {
    let bits = x.to_bits() as i32;
    if bits < 0 {
        i32::MIN - bits
    } else {
        bits
    }
}

/// Formats `x` like C's `%.{digits}g`: `digits` significant digits, trailing
/// zeros trimmed, exponent notation outside `[1e-4, 1e{digits})`.
pub fn format_significant<S: Scalar>(x: S) -> String {
    let v = x.as_f64();
    let digits = S::ROUND_TRIP_DIGITS;
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
