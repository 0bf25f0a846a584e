//! Interval reduction functions: bound shaving for box consistency and one
//! interval Gauss-Seidel sweep over a square linear system.

use super::arith;
use super::expr::ArithConstraint;
use super::FunctionError;
use crate::lattice::{Domain, Interval, VarDomain};
use crate::scalar::Scalar;

/// Shaves both bounds of `target` under `c`.
///
/// Slices are cells of a fixed dyadic grid (aligned on multiples of powers
/// of two), searched depth-first down to cells of width at most `eps`. A
/// slice is dropped when interval evaluation of `c` over it, with the other
/// variables at their full domains, is disjoint from the relation. The grid
/// does not depend on the current bounds, which keeps the function
/// monotonic.
pub fn box_narrow<S: Scalar>(
    c: &ArithConstraint<S>,
    target: usize,
    d: &Domain<S>,
    eps: S,
) -> Result<Domain<S>, FunctionError> {
    if eps.is_nan() || eps <= S::zero() {
        return Err(FunctionError::Parameter(format!(
            "box narrowing needs eps > 0, got {eps}"
        )));
    }
    if d.is_empty() {
        return Ok(d.clone());
    }
    let x = match d.get(target) {
        VarDomain::Interval(i) => *i,
        _ => {
            return Err(FunctionError::Kind(format!(
                "variable {} is not an interval",
                d.vars()[target]
            )))
        }
    };
    if c.refutes(d, None) {
        return Ok(Domain::bottom(d.vars().clone()));
    }
    let width = x.width();
    if !width.is_finite() || width == S::zero() {
        return Ok(d.clone());
    }
    let shaver = Shaver {
        c,
        target,
        d,
        x,
        leaf: leaf_exponent(eps),
    };
    let top = top_exponent(width);
    let unit = pow2::<S>(top);
    let k_lo = (x.lo() / unit).floor();
    let k_hi = (x.hi() / unit).floor();
    if k_hi - k_lo > S::from_f64(4.0) || k_lo + S::one() == k_lo {
        // the domain is only a few ulps wide: no cell can be split
        return Ok(d.clone());
    }
    let mut cells = Vec::new();
    let mut k = k_lo;
    while k <= k_hi {
        cells.push(Cell {
            lo: k * unit,
            hi: (k + S::one()) * unit,
            level: top,
        });
        k = k + S::one();
    }
    let lo = cells.iter().find_map(|cell| shaver.lowest(*cell));
    let hi = cells.iter().rev().find_map(|cell| shaver.highest(*cell));
    let mut out = d.clone();
    match (lo, hi) {
        (Some(lo), Some(hi)) if lo <= hi => {
            out.narrow(
                target,
                &VarDomain::Interval(Interval::checked(lo, hi).expect("ordered")),
            );
        }
        _ => out.set(target, VarDomain::Empty),
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Cell<S> {
    lo: S,
    hi: S,
    level: i32,
}

struct Shaver<'a, S: Scalar> {
    c: &'a ArithConstraint<S>,
    target: usize,
    d: &'a Domain<S>,
    x: Interval<S>,
    leaf: i32,
}

impl<S: Scalar> Shaver<'_, S> {
    fn clip(&self, cell: Cell<S>) -> Option<Interval<S>> {
        Interval::checked(cell.lo, cell.hi)?.intersect(&self.x)
    }

    fn split(&self, cell: Cell<S>) -> Option<(Cell<S>, Cell<S>)> {
        if cell.level <= self.leaf {
            return None;
        }
        let mid = cell.lo + pow2::<S>(cell.level - 1);
        if !(cell.lo < mid && mid < cell.hi) {
            return None;
        }
        let level = cell.level - 1;
        Some((
            Cell {
                lo: cell.lo,
                hi: mid,
                level,
            },
            Cell {
                lo: mid,
                hi: cell.hi,
                level,
            },
        ))
    }

    fn refuted(&self, slice: Interval<S>) -> bool {
        self.c.refutes(self.d, Some((self.target, slice)))
    }

    fn lowest(&self, cell: Cell<S>) -> Option<S> {
        let slice = self.clip(cell)?;
        if self.refuted(slice) {
            return None;
        }
        match self.split(cell) {
            None => Some(slice.lo()),
            Some((l, r)) => self.lowest(l).or_else(|| self.lowest(r)),
        }
    }

    fn highest(&self, cell: Cell<S>) -> Option<S> {
        let slice = self.clip(cell)?;
        if self.refuted(slice) {
            return None;
        }
        match self.split(cell) {
            None => Some(slice.hi()),
            Some((l, r)) => self.highest(r).or_else(|| self.highest(l)),
        }
    }
}

fn min_exponent<S: Scalar>() -> i32 {
    S::min_positive_value()
        .log2()
        .floor()
        .to_i32()
        .unwrap_or(-1022)
}

fn leaf_exponent<S: Scalar>(eps: S) -> i32 {
    let e = eps.log2().floor().to_i32().unwrap_or(i32::MAX);
    e.max(min_exponent::<S>())
}

fn top_exponent<S: Scalar>(width: S) -> i32 {
    width
        .log2()
        .ceil()
        .to_i32()
        .unwrap_or(0)
        .max(min_exponent::<S>())
}

fn pow2<S: Scalar>(e: i32) -> S {
    S::from_f64(2.0).powi(e)
}

/// Square interval system `A x = b` over `vars`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem<S = f64> {
    vars: Vec<usize>,
    a: Vec<Vec<Interval<S>>>,
    b: Vec<Interval<S>>,
}

impl<S: Scalar> LinearSystem<S> {
    /// Row `i` is the equation solved for `vars[i]`. Diagonal entries must
    /// not contain zero.
    pub fn new(
        vars: Vec<usize>,
        a: Vec<Vec<Interval<S>>>,
        b: Vec<Interval<S>>,
    ) -> Result<Self, FunctionError> {
        let n = vars.len();
        if n == 0 {
            return Err(FunctionError::Parameter("empty linear system".into()));
        }
        if a.len() != n || b.len() != n || a.iter().any(|row| row.len() != n) {
            return Err(FunctionError::Parameter(format!(
                "linear system over {n} variables is not square"
            )));
        }
        for (i, row) in a.iter().enumerate() {
            if row[i].contains(S::zero()) {
                return Err(FunctionError::Parameter(format!(
                    "diagonal entry {i} contains zero"
                )));
            }
        }
        Ok(LinearSystem { vars, a, b })
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn matrix(&self) -> &[Vec<Interval<S>>] {
        &self.a
    }

    pub fn rhs(&self) -> &[Interval<S>] {
        &self.b
    }

    /// One sweep: `x_i := x_i ∩ (b_i - Σ_{j≠i} A_ij x_j) / A_ii`, in order,
    /// each step using the values already updated in this sweep.
    pub fn sweep(&self, d: &Domain<S>) -> Domain<S> {
        if d.is_empty() {
            return d.clone();
        }
        let mut out = d.clone();
        let zero = Interval::point(S::zero());
        for (i, &xi) in self.vars.iter().enumerate() {
            let mut s = self.b[i];
            for (j, &xj) in self.vars.iter().enumerate() {
                if j == i || self.a[i][j] == zero {
                    continue;
                }
                let Some(v) = out.get(xj).as_interval() else {
                    return out;
                };
                s = arith::sub(&s, &arith::mul(&self.a[i][j], v));
            }
            let q = arith::div(&s, &self.a[i][i]);
            if out.get(xi).as_interval().is_none() {
                continue;
            }
            out.narrow(xi, &VarDomain::Interval(q));
            if out.is_empty() {
                break;
            }
        }
        out
    }
}
