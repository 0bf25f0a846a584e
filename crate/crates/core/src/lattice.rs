//! The computation domain: products of per-variable domains ordered by
//! componentwise inclusion, with intersection as meet.
//!
//! A [`Domain`] is one element of the semilattice. Each component is either a
//! finite set of integers or a closed floating-point interval. The bottom
//! element is represented canonically: as soon as one component becomes
//! [`VarDomain::Empty`], every component is set to `Empty`, so all empty
//! domains over the same variables compare equal.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::scalar::{format_significant, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("variable lists differ")]
    VariableMismatch,
    #[error("variable `{0}` declared twice")]
    DuplicateVariable(String),
    #[error("{vars} variable names for {doms} domains")]
    LengthMismatch { vars: usize, doms: usize },
    #[error("interval bound is NaN")]
    NanBound,
    #[error("interval lower bound {lo} exceeds upper bound {hi}")]
    InvertedInterval { lo: String, hi: String },
    #[error("cannot combine a finite set with an interval for variable `{0}`")]
    KindMismatch(String),
    #[error("lattice has {required} elements, bound is {bound}")]
    Capacity { required: u128, bound: usize },
    #[error("lattice enumeration requires finite-set universes")]
    NotEnumerable,
}

/// A finite set was combined with an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KindMismatch;

/// Non-empty, duplicate-free, ascending set of integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiniteSet(Vec<i64>);

impl FiniteSet {
    /// Builds a set from arbitrary values. Returns `None` for an empty input.
    pub fn new(values: impl IntoIterator<Item = i64>) -> Option<Self> {
        let mut v: Vec<i64> = values.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            None
        } else {
            Some(FiniteSet(v))
        }
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: i64) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn min(&self) -> i64 {
        self.0[0]
    }

    pub fn max(&self) -> i64 {
        self.0[self.0.len() - 1]
    }

    pub fn intersect(&self, other: &FiniteSet) -> Option<FiniteSet> {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::with_capacity(self.0.len().min(other.0.len()));
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        if out.is_empty() {
            None
        } else {
            Some(FiniteSet(out))
        }
    }

    pub fn is_subset(&self, other: &FiniteSet) -> bool {
        self.0.len() <= other.0.len() && self.0.iter().all(|v| other.contains(*v))
    }
}

/// Closed interval `[lo, hi]` with `lo <= hi` and no NaN bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<S = f64> {
    lo: S,
    hi: S,
}

impl<S: Scalar> Interval<S> {
    pub fn new(lo: S, hi: S) -> Result<Self, LatticeError> {
        if lo.is_nan() || hi.is_nan() {
            return Err(LatticeError::NanBound);
        }
        if lo > hi {
            return Err(LatticeError::InvertedInterval {
                lo: lo.to_string(),
                hi: hi.to_string(),
            });
        }
        Ok(Interval { lo, hi })
    }

    /// `[lo, hi]`, or `None` when the bounds are inverted or NaN.
    pub fn checked(lo: S, hi: S) -> Option<Self> {
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    pub fn point(v: S) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn entire() -> Self {
        Interval {
            lo: S::neg_infinity(),
            hi: S::infinity(),
        }
    }

    pub fn lo(&self) -> S {
        self.lo
    }

    pub fn hi(&self) -> S {
        self.hi
    }

    pub fn width(&self) -> S {
        self.hi - self.lo
    }

    pub fn contains(&self, v: S) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn intersect(&self, other: &Interval<S>) -> Option<Interval<S>> {
        Interval::checked(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    pub fn hull(&self, other: &Interval<S>) -> Interval<S> {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn is_subset(&self, other: &Interval<S>) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }
}

impl<S: Scalar> Eq for Interval<S> {}

/// Domain of a single variable.
#[derive(Debug, Clone, PartialEq)]
pub enum VarDomain<S = f64> {
    Empty,
    Set(FiniteSet),
    Interval(Interval<S>),
}

impl<S: Scalar> Eq for VarDomain<S> {}

impl<S: Scalar> VarDomain<S> {
    pub fn set(values: impl IntoIterator<Item = i64>) -> Self {
        FiniteSet::new(values).map_or(VarDomain::Empty, VarDomain::Set)
    }

    pub fn interval(lo: S, hi: S) -> Result<Self, LatticeError> {
        Interval::new(lo, hi).map(VarDomain::Interval)
    }

    pub fn from_interval(iv: Option<Interval<S>>) -> Self {
        iv.map_or(VarDomain::Empty, VarDomain::Interval)
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, VarDomain::Empty)
    }

    pub fn as_set(&self) -> Option<&FiniteSet> {
        match self {
            VarDomain::Set(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_interval(&self) -> Option<&Interval<S>> {
        match self {
            VarDomain::Interval(i) => Some(i),
            _ => None,
        }
    }

    /// Intersection. Mixing a set with an interval is a kind error.
    pub fn meet(&self, other: &VarDomain<S>) -> Result<VarDomain<S>, KindMismatch> {
        Ok(match (self, other) {
            (VarDomain::Empty, _) | (_, VarDomain::Empty) => VarDomain::Empty,
            (VarDomain::Set(a), VarDomain::Set(b)) => {
                a.intersect(b).map_or(VarDomain::Empty, VarDomain::Set)
            }
            (VarDomain::Interval(a), VarDomain::Interval(b)) => {
                VarDomain::from_interval(a.intersect(b))
            }
            _ => return Err(KindMismatch),
        })
    }

    pub fn is_subset(&self, other: &VarDomain<S>) -> Result<bool, KindMismatch> {
        Ok(match (self, other) {
            (VarDomain::Empty, _) => true,
            (_, VarDomain::Empty) => false,
            (VarDomain::Set(a), VarDomain::Set(b)) => a.is_subset(b),
            (VarDomain::Interval(a), VarDomain::Interval(b)) => a.is_subset(b),
            _ => return Err(KindMismatch),
        })
    }

    /// Cardinality for sets, width for intervals, zero when empty.
    pub fn size(&self) -> f64 {
        match self {
            VarDomain::Empty => 0.0,
            VarDomain::Set(s) => s.len() as f64,
            VarDomain::Interval(i) => i.width().as_f64(),
        }
    }
}

impl<S: Scalar> fmt::Display for VarDomain<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarDomain::Empty => write!(f, "{{}}"),
            VarDomain::Set(s) => {
                write!(f, "{{")?;
                for (i, v) in s.values().iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "}}")
            }
            VarDomain::Interval(i) => {
                write!(
                    f,
                    "[{},{}]",
                    format_significant(i.lo),
                    format_significant(i.hi)
                )
            }
        }
    }
}

/// An element of the semilattice: one [`VarDomain`] per named variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain<S = f64> {
    vars: Arc<[String]>,
    doms: Vec<VarDomain<S>>,
    empty: bool,
}

impl<S: Scalar> Eq for Domain<S> {}

impl<S: Scalar> Domain<S> {
    pub fn new(vars: Vec<String>, doms: Vec<VarDomain<S>>) -> Result<Self, LatticeError> {
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].contains(v) {
                return Err(LatticeError::DuplicateVariable(v.clone()));
            }
        }
        Domain::with_vars(vars.into(), doms)
    }

    /// Builds a domain over an already validated, shared variable list.
    pub fn with_vars(vars: Arc<[String]>, doms: Vec<VarDomain<S>>) -> Result<Self, LatticeError> {
        if vars.len() != doms.len() {
            return Err(LatticeError::LengthMismatch {
                vars: vars.len(),
                doms: doms.len(),
            });
        }
        let mut d = Domain {
            vars,
            doms,
            empty: false,
        };
        d.normalize();
        Ok(d)
    }

    fn normalize(&mut self) {
        self.empty = self.doms.iter().any(VarDomain::is_empty);
        if self.empty {
            self.doms.iter_mut().for_each(|c| *c = VarDomain::Empty);
        }
    }

    /// The bottom element over `vars`.
    pub fn bottom(vars: Arc<[String]>) -> Self {
        let doms = vec![VarDomain::Empty; vars.len()];
        Domain {
            vars,
            doms,
            empty: true,
        }
    }

    pub fn vars(&self) -> &Arc<[String]> {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.doms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn get(&self, i: usize) -> &VarDomain<S> {
        &self.doms[i]
    }

    pub fn components(&self) -> &[VarDomain<S>] {
        &self.doms
    }

    /// Replaces component `i`; an empty component collapses the whole domain.
    pub fn set(&mut self, i: usize, dom: VarDomain<S>) {
        if self.empty {
            return;
        }
        if dom.is_empty() {
            self.doms.iter_mut().for_each(|c| *c = VarDomain::Empty);
            self.empty = true;
        } else {
            self.doms[i] = dom;
        }
    }

    /// Intersects component `i` with `dom`. Returns true when it shrank.
    ///
    /// Panics on a set/interval kind mix; reduction functions are only
    /// built against kind-consistent instances.
    pub fn narrow(&mut self, i: usize, dom: &VarDomain<S>) -> bool {
        if self.empty {
            return false;
        }
        let next = self.doms[i]
            .meet(dom)
            .unwrap_or_else(|_| panic!("kind mismatch narrowing variable `{}`", self.vars[i]));
        if next != self.doms[i] {
            self.set(i, next);
            true
        } else {
            false
        }
    }

    pub fn same_vars(&self, other: &Domain<S>) -> bool {
        Arc::ptr_eq(&self.vars, &other.vars) || self.vars == other.vars
    }

    pub fn meet(&self, other: &Domain<S>) -> Result<Domain<S>, LatticeError> {
        if !self.same_vars(other) {
            return Err(LatticeError::VariableMismatch);
        }
        if self.empty {
            return Ok(self.clone());
        }
        if other.empty {
            return Ok(other.clone());
        }
        let mut doms = Vec::with_capacity(self.doms.len());
        for (i, (a, b)) in self.doms.iter().zip(&other.doms).enumerate() {
            doms.push(
                a.meet(b)
                    .map_err(|_| LatticeError::KindMismatch(self.vars[i].clone()))?,
            );
        }
        Domain::with_vars(self.vars.clone(), doms)
    }

    pub fn leq(&self, other: &Domain<S>) -> Result<bool, LatticeError> {
        if !self.same_vars(other) {
            return Err(LatticeError::VariableMismatch);
        }
        if self.empty {
            return Ok(true);
        }
        if other.empty {
            return Ok(false);
        }
        for (i, (a, b)) in self.doms.iter().zip(&other.doms).enumerate() {
            if !a
                .is_subset(b)
                .map_err(|_| LatticeError::KindMismatch(self.vars[i].clone()))?
            {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Sum of per-variable sizes: cardinality for sets, width for intervals.
    pub fn measure(&self) -> f64 {
        if self.empty {
            return 0.0;
        }
        self.doms.iter().map(VarDomain::size).sum()
    }

    /// Indices of variables whose component differs between `self` and
    /// `other`. Interval bounds are compared exactly.
    pub fn changed_vars(&self, other: &Domain<S>) -> Vec<usize> {
        (0..self.doms.len())
            .filter(|&i| self.doms[i] != other.doms[i])
            .collect()
    }
}

impl<S: Scalar> fmt::Display for Domain<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.empty {
            return write!(f, "empty");
        }
        for (i, (v, d)) in self.vars.iter().zip(&self.doms).enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{v}={d}")?;
        }
        Ok(())
    }
}

/// Enumerates every element of the product of powersets of `universes`
/// (one combination of subsets per variable, the empty subset included).
///
/// Combinations containing an empty subset all collapse to the bottom
/// element, so the bottom appears several times in the output.
pub fn enumerate_lattice<S: Scalar>(
    vars: &Arc<[String]>,
    universes: &[Vec<i64>],
    max_elements: usize,
) -> Result<Vec<Domain<S>>, LatticeError> {
    if vars.len() != universes.len() {
        return Err(LatticeError::LengthMismatch {
            vars: vars.len(),
            doms: universes.len(),
        });
    }
    let mut required: u128 = 1;
    for u in universes {
        let mut sorted = u.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() >= 64 {
            return Err(LatticeError::Capacity {
                required: u128::MAX,
                bound: max_elements,
            });
        }
        required = required.saturating_mul(1u128 << sorted.len());
    }
    if required > max_elements as u128 {
        return Err(LatticeError::Capacity {
            required,
            bound: max_elements,
        });
    }
    let universes: Vec<Vec<i64>> = universes
        .iter()
        .map(|u| {
            let mut s = u.clone();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();
    let mut out = Vec::with_capacity(required as usize);
    let mut masks = vec![0u64; universes.len()];
    loop {
        let doms = masks
            .iter()
            .zip(&universes)
            .map(|(&m, u)| VarDomain::set((0..u.len()).filter(|b| m >> b & 1 == 1).map(|b| u[b])))
            .collect();
        out.push(Domain::with_vars(vars.clone(), doms)?);
        // odometer increment
        let mut k = 0;
        loop {
            if k == masks.len() {
                return Ok(out);
            }
            masks[k] += 1;
            if masks[k] < 1u64 << universes[k].len() {
                break;
            }
            masks[k] = 0;
            k += 1;
        }
    }
}

/// Convenience: a shared variable list from names.
pub fn var_list<I, T>(names: I) -> Arc<[String]>
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    names.into_iter().map(Into::into).collect::<Vec<_>>().into()
}
