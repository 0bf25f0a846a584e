//! Outward-rounded interval arithmetic.
//!
//! Each bound is computed in round-to-nearest and then moved one ulp outward
//! unless an error-free transformation shows the rounded value is already on
//! the safe side of the exact result. Near the subnormal range the rounding
//! error cannot be recovered reliably, so those bounds are always widened.

use std::cmp::Ordering;

use crate::lattice::Interval;
use crate::scalar::Scalar;

/// Where the exact result lies relative to the rounded one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Residual {
    Exact,
    /// exact < rounded
    Below,
    /// exact > rounded
    Above,
    Unknown,
}

fn from_sign<S: Scalar>(r: S) -> Residual {
    match r.partial_cmp(&S::zero()) {
        Some(Ordering::Less) => Residual::Below,
        Some(Ordering::Greater) => Residual::Above,
        Some(Ordering::Equal) => Residual::Exact,
        None => Residual::Unknown,
    }
}

fn tiny<S: Scalar>(r: S) -> bool {
    // below 2^p * MIN_POSITIVE the residual may itself underflow
    r != S::zero() && r.abs() < S::min_positive_value() / S::epsilon()
}

fn overflowed<S: Scalar>(r: S) -> Residual {
    if r > S::zero() {
        Residual::Below
    } else {
        Residual::Above
    }
}

fn add_residual<S: Scalar>(a: S, b: S, s: S) -> Residual {
    if !s.is_finite() {
        return if a.is_finite() && b.is_finite() {
            overflowed(s)
        } else {
            Residual::Exact
        };
    }
    if tiny(s) || (s == S::zero() && a != -b) {
        return Residual::Unknown;
    }
    // two-sum
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    from_sign(err)
}

fn mul_residual<S: Scalar>(a: S, b: S, p: S) -> Residual {
    if !p.is_finite() {
        return if a.is_finite() && b.is_finite() {
            overflowed(p)
        } else {
            Residual::Exact
        };
    }
    if p == S::zero() {
        return if a == S::zero() || b == S::zero() {
            Residual::Exact
        } else {
            Residual::Unknown
        };
    }
    if tiny(p) {
        return Residual::Unknown;
    }
    from_sign(a.mul_add(b, -p))
}

fn div_residual<S: Scalar>(a: S, b: S, q: S) -> Residual {
    if !q.is_finite() {
        return if a.is_finite() && b.is_finite() {
            overflowed(q)
        } else {
            Residual::Exact
        };
    }
    if q == S::zero() {
        return if a == S::zero() || b.is_infinite() {
            Residual::Exact
        } else {
            Residual::Unknown
        };
    }
    if b.is_infinite() || tiny(q) {
        return Residual::Unknown;
    }
    // a - q*b has the sign of (exact - q) * sign(b)
    let r = (-q).mul_add(b, a);
    let r = if b < S::zero() { -r } else { r };
    from_sign(r)
}

fn round_down<S: Scalar>(v: S, res: Residual) -> S {
    match res {
        Residual::Exact | Residual::Above => v,
        Residual::Below | Residual::Unknown => v.next_down(),
    }
}

fn round_up<S: Scalar>(v: S, res: Residual) -> S {
    match res {
        Residual::Exact | Residual::Below => v,
        Residual::Above | Residual::Unknown => v.next_up(),
    }
}

pub fn add_down<S: Scalar>(a: S, b: S) -> S {
    let s = a + b;
    if s.is_nan() {
        return S::neg_infinity();
    }
    round_down(s, add_residual(a, b, s))
}

pub fn add_up<S: Scalar>(a: S, b: S) -> S {
    let s = a + b;
    if s.is_nan() {
        return S::infinity();
    }
    round_up(s, add_residual(a, b, s))
}

fn mul_exact<S: Scalar>(a: S, b: S) -> S {
    let p = a * b;
    // 0 * inf contributes 0 to interval products
    if p.is_nan() {
        S::zero()
    } else {
        p
    }
}

fn mul_down<S: Scalar>(a: S, b: S) -> S {
    let p = mul_exact(a, b);
    if (a == S::zero() || b == S::zero()) && p == S::zero() {
        return p;
    }
    round_down(p, mul_residual(a, b, p))
}

fn mul_up<S: Scalar>(a: S, b: S) -> S {
    let p = mul_exact(a, b);
    if (a == S::zero() || b == S::zero()) && p == S::zero() {
        return p;
    }
    round_up(p, mul_residual(a, b, p))
}

fn div_down<S: Scalar>(a: S, b: S) -> Option<S> {
    let q = a / b;
    if q.is_nan() {
        return None;
    }
    Some(round_down(q, div_residual(a, b, q)))
}

fn div_up<S: Scalar>(a: S, b: S) -> Option<S> {
    let q = a / b;
    if q.is_nan() {
        return None;
    }
    Some(round_up(q, div_residual(a, b, q)))
}

fn sqrt_down<S: Scalar>(a: S) -> S {
    let r = a.sqrt();
    if !r.is_finite() || r == S::zero() {
        return r;
    }
    let res = if tiny(a) {
        Residual::Unknown
    } else {
        from_sign((-r).mul_add(r, a))
    };
    round_down(r, res).max(S::zero())
}

fn sqrt_up<S: Scalar>(a: S) -> S {
    let r = a.sqrt();
    if !r.is_finite() {
        return r;
    }
    if r == S::zero() {
        return if a == S::zero() {
            r
        } else {
            S::min_positive_value()
        };
    }
    let res = if tiny(a) {
        Residual::Unknown
    } else {
        from_sign((-r).mul_add(r, a))
    };
    round_up(r, res)
}

fn make<S: Scalar>(lo: S, hi: S) -> Interval<S> {
    Interval::checked(lo, hi).unwrap_or_else(Interval::entire)
}

pub fn add<S: Scalar>(a: &Interval<S>, b: &Interval<S>) -> Interval<S> {
    make(add_down(a.lo(), b.lo()), add_up(a.hi(), b.hi()))
}

pub fn neg<S: Scalar>(a: &Interval<S>) -> Interval<S> {
    make(-a.hi(), -a.lo())
}

pub fn sub<S: Scalar>(a: &Interval<S>, b: &Interval<S>) -> Interval<S> {
    add(a, &neg(b))
}

pub fn mul<S: Scalar>(a: &Interval<S>, b: &Interval<S>) -> Interval<S> {
    let pairs = [
        (a.lo(), b.lo()),
        (a.lo(), b.hi()),
        (a.hi(), b.lo()),
        (a.hi(), b.hi()),
    ];
    let lo = pairs
        .iter()
        .map(|&(x, y)| mul_down(x, y))
        .fold(S::infinity(), S::min);
    let hi = pairs
        .iter()
        .map(|&(x, y)| mul_up(x, y))
        .fold(S::neg_infinity(), S::max);
    make(lo, hi)
}

/// Division by an interval that does not contain zero.
pub fn div<S: Scalar>(a: &Interval<S>, b: &Interval<S>) -> Interval<S> {
    debug_assert!(!b.contains(S::zero()));
    let pairs = [
        (a.lo(), b.lo()),
        (a.lo(), b.hi()),
        (a.hi(), b.lo()),
        (a.hi(), b.hi()),
    ];
    let lo = pairs
        .iter()
        .filter_map(|&(x, y)| div_down(x, y))
        .fold(S::infinity(), S::min);
    let hi = pairs
        .iter()
        .filter_map(|&(x, y)| div_up(x, y))
        .fold(S::neg_infinity(), S::max);
    make(lo, hi)
}

/// Hull of `{x ∈ within : x·d = n for some n ∈ num, d ∈ den}`. Handles
/// denominators containing zero by splitting them at zero.
pub fn div_within<S: Scalar>(
    num: &Interval<S>,
    den: &Interval<S>,
    within: &Interval<S>,
) -> Option<Interval<S>> {
    let zero = S::zero();
    if !den.contains(zero) {
        return div(num, den).intersect(within);
    }
    if num.contains(zero) {
        return Some(*within);
    }
    let (dl, dh) = (den.lo(), den.hi());
    // num lies strictly on one side of zero; one piece per nonzero half of den
    let (neg_piece, pos_piece) = if num.lo() > zero {
        let nl = num.lo();
        (
            (dl < zero)
                .then(|| div_up(nl, dl).map(|hi| (S::neg_infinity(), hi)))
                .flatten(),
            (dh > zero)
                .then(|| div_down(nl, dh).map(|lo| (lo, S::infinity())))
                .flatten(),
        )
    } else {
        let nh = num.hi();
        (
            (dl < zero)
                .then(|| div_down(nh, dl).map(|lo| (lo, S::infinity())))
                .flatten(),
            (dh > zero)
                .then(|| div_up(nh, dh).map(|hi| (S::neg_infinity(), hi)))
                .flatten(),
        )
    };
    [neg_piece, pos_piece]
        .into_iter()
        .flatten()
        .filter_map(|(lo, hi)| Interval::checked(lo, hi).and_then(|p| p.intersect(within)))
        .reduce(|a, b| a.hull(&b))
}

pub fn sqr<S: Scalar>(a: &Interval<S>) -> Interval<S> {
    let (lo, hi) = (a.lo(), a.hi());
    if lo >= S::zero() {
        make(mul_down(lo, lo).max(S::zero()), mul_up(hi, hi))
    } else if hi <= S::zero() {
        make(mul_down(hi, hi).max(S::zero()), mul_up(lo, lo))
    } else {
        make(S::zero(), mul_up(lo, lo).max(mul_up(hi, hi)))
    }
}

/// Square root of the non-negative part of `a`; `None` when `a < 0`.
pub fn sqrt<S: Scalar>(a: &Interval<S>) -> Option<Interval<S>> {
    let nonneg = a.intersect(&Interval::checked(S::zero(), S::infinity())?)?;
    Some(make(sqrt_down(nonneg.lo()), sqrt_up(nonneg.hi())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval<f64> {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn division_around_zero_keeps_reachable_pieces() {
        let within = iv(-2.286, 0.364);
        let num = Interval::checked(f64::NEG_INFINITY, -2.96).unwrap();
        let out = div_within(&num, &iv(-3.45, 2.04), &within).unwrap();
        assert!(out.lo() == -2.286 && (out.hi() + 2.96 / 2.04).abs() < 1e-15);
        assert_eq!(div_within(&iv(1.0, 2.0), &iv(0.0, 0.0), &within), None);
        assert_eq!(
            div_within(&iv(-1.0, 2.0), &iv(-1.0, 1.0), &within),
            Some(within)
        );
        assert_eq!(
            div_within(&iv(1.0, 2.0), &iv(0.0, 4.0), &iv(-5.0, 5.0)),
            Some(iv(0.25, 5.0))
        );
        assert_eq!(
            div_within(&iv(1.0, 2.0), &iv(2.0, 4.0), &iv(-5.0, 5.0)),
            Some(iv(0.25, 1.0))
        );
    }

    #[test]
    fn exact_operations_do_not_widen() {
        assert_eq!(add(&iv(1.0, 2.0), &iv(3.0, 4.0)), iv(4.0, 6.0));
        assert_eq!(sub(&iv(5.0, 5.0), &iv(0.0, 2.0)), iv(3.0, 5.0));
        assert_eq!(mul(&iv(-2.0, 3.0), &iv(4.0, 5.0)), iv(-10.0, 15.0));
        assert_eq!(div(&iv(2.0, 2.0), &iv(1.0, 1.0)), iv(2.0, 2.0));
        assert_eq!(sqr(&iv(-3.0, 2.0)), iv(0.0, 9.0));
        assert_eq!(sqrt(&iv(4.0, 9.0)), Some(iv(2.0, 3.0)));
        assert_eq!(sqrt(&iv(-4.0, -1.0)), None);
    }

    #[test]
    fn inexact_operations_enclose_the_real_result() {
        let third = div(&iv(1.0, 1.0), &iv(3.0, 3.0));
        assert!(third.lo() < third.hi());
        assert!(third.lo() * 3.0 <= 1.0 && third.hi() * 3.0 >= 1.0);
        let s = add(&iv(0.1, 0.1), &iv(0.2, 0.2));
        assert!(s.lo() <= 0.3 && 0.3 <= s.hi());
        assert_eq!(s.hi(), 0.30000000000000004);
        let r = sqrt(&iv(2.0, 2.0)).unwrap();
        assert_eq!(r.hi(), r.lo().next_up());
    }

    #[test]
    fn infinities_and_zero_products() {
        let e = Interval::<f64>::entire();
        assert_eq!(mul(&iv(0.0, 0.0), &e), iv(0.0, 0.0));
        assert_eq!(add(&e, &iv(1.0, 1.0)), e);
        let q = div(&iv(1.0, f64::INFINITY), &iv(1.0, f64::INFINITY));
        assert_eq!(q, iv(0.0, f64::INFINITY));
        let big = add(&iv(f64::MAX, f64::MAX), &iv(f64::MAX, f64::MAX));
        assert_eq!(big.lo(), f64::MAX);
        assert_eq!(big.hi(), f64::INFINITY);
    }

    #[test]
    fn subnormal_results_are_widened() {
        let t = mul(&iv(1e-300, 1e-300), &iv(1e-20, 1e-20));
        assert!(t.lo() < t.hi());
        assert!(t.lo() <= 1e-320 && t.hi() >= 1e-320);
    }
}
