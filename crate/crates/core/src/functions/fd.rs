//! Finite-domain reduction functions: arc revision for binary constraints and
//! narrowing tables keyed by read-variable values.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::lattice::{Domain, FiniteSet, VarDomain};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl RelOp {
    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            RelOp::Lt => a < b,
            RelOp::Le => a <= b,
            RelOp::Eq => a == b,
            RelOp::Ne => a != b,
            RelOp::Ge => a >= b,
            RelOp::Gt => a > b,
        }
    }

    /// The relation seen from the right-hand operand.
    pub fn flip(self) -> RelOp {
        match self {
            RelOp::Lt => RelOp::Gt,
            RelOp::Le => RelOp::Ge,
            RelOp::Eq => RelOp::Eq,
            RelOp::Ne => RelOp::Ne,
            RelOp::Ge => RelOp::Le,
            RelOp::Gt => RelOp::Lt,
        }
    }

    /// Does some `b` in `other` satisfy `a op b`?
    fn supported(self, a: i64, other: &FiniteSet) -> bool {
        match self {
            RelOp::Lt => a < other.max(),
            RelOp::Le => a <= other.max(),
            RelOp::Gt => a > other.min(),
            RelOp::Ge => a >= other.min(),
            RelOp::Eq => other.contains(a),
            RelOp::Ne => other.len() > 1 || other.min() != a,
        }
    }
}

impl fmt::Display for RelOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Eq => "=",
            RelOp::Ne => "!=",
            RelOp::Ge => ">=",
            RelOp::Gt => ">",
        })
    }
}

/// Binary constraint over two finite-set variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BinaryConstraint {
    Relation {
        x: usize,
        op: RelOp,
        y: usize,
    },
    Table {
        x: usize,
        y: usize,
        allowed: BTreeSet<(i64, i64)>,
    },
}

impl BinaryConstraint {
    pub fn scope(&self) -> (usize, usize) {
        match self {
            BinaryConstraint::Relation { x, y, .. } | BinaryConstraint::Table { x, y, .. } => {
                (*x, *y)
            }
        }
    }

    pub fn allows(&self, a: i64, b: i64) -> bool {
        match self {
            BinaryConstraint::Relation { op, .. } => op.holds(a, b),
            BinaryConstraint::Table { allowed, .. } => allowed.contains(&(a, b)),
        }
    }

    /// Values of `target` with a support in the other variable's domain.
    /// `None` when one of the two components is not a finite set.
    pub fn supported_values<S: Scalar>(
        &self,
        target: usize,
        d: &Domain<S>,
    ) -> Option<VarDomain<S>> {
        let (x, y) = self.scope();
        let (mine, other, forward) = if target == x {
            (x, y, true)
        } else {
            (y, x, false)
        };
        let (VarDomain::Set(tv), VarDomain::Set(ov)) = (d.get(mine), d.get(other)) else {
            return None;
        };
        let kept = tv.values().iter().copied().filter(|&a| match self {
            BinaryConstraint::Relation { op, .. } => {
                let op = if forward { *op } else { op.flip() };
                op.supported(a, ov)
            }
            BinaryConstraint::Table { .. } => ov.values().iter().any(|&b| {
                if forward {
                    self.allows(a, b)
                } else {
                    self.allows(b, a)
                }
            }),
        });
        Some(VarDomain::set(kept))
    }
}

/// Removes from `target` every value without support; other components are
/// untouched. `None` when the variables are not finite sets.
pub fn revise<S: Scalar>(c: &BinaryConstraint, target: usize, d: &Domain<S>) -> Option<Domain<S>> {
    if d.is_empty() {
        return Some(d.clone());
    }
    let kept = c.supported_values(target, d)?;
    let mut out = d.clone();
    out.narrow(target, &kept);
    Some(out)
}

/// A projection-form function given by table: each combination of read
/// values maps to the allowed values of each written variable. The narrowing
/// for a written variable is the union over all read combinations in the
/// current domain; combinations missing from the table allow nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NarrowingTable {
    reads: Vec<usize>,
    writes: Vec<usize>,
    rows: HashMap<Vec<i64>, Vec<BTreeSet<i64>>>,
}

impl NarrowingTable {
    pub fn new(reads: Vec<usize>, writes: Vec<usize>) -> Self {
        NarrowingTable {
            reads,
            writes,
            rows: HashMap::new(),
        }
    }

    /// Sets the allowed values (one set per written variable) for one read
    /// combination.
    pub fn insert(&mut self, key: Vec<i64>, allowed: Vec<BTreeSet<i64>>) {
        assert_eq!(key.len(), self.reads.len());
        assert_eq!(allowed.len(), self.writes.len());
        self.rows.insert(key, allowed);
    }

    /// Table of the generalized arc-consistency projection of a binary
    /// constraint onto both of its variables at once.
    pub fn arc_consistency(c: &BinaryConstraint, ux: &[i64], uy: &[i64]) -> Self {
        let (x, y) = c.scope();
        let mut t = NarrowingTable::new(vec![x, y], vec![x, y]);
        for &a in ux {
            for &b in uy {
                let allowed = if c.allows(a, b) {
                    vec![BTreeSet::from([a]), BTreeSet::from([b])]
                } else {
                    vec![BTreeSet::new(), BTreeSet::new()]
                };
                t.insert(vec![a, b], allowed);
            }
        }
        t
    }

    pub fn reads(&self) -> &[usize] {
        &self.reads
    }

    pub fn writes(&self) -> &[usize] {
        &self.writes
    }

    pub fn apply<S: Scalar>(&self, d: &Domain<S>) -> Domain<S> {
        if d.is_empty() {
            return d.clone();
        }
        let mut read_sets = Vec::with_capacity(self.reads.len());
        for &r in &self.reads {
            match d.get(r) {
                VarDomain::Set(s) => read_sets.push(s.values()),
                _ => return d.clone(),
            }
        }
        let mut allowed: Vec<BTreeSet<i64>> = vec![BTreeSet::new(); self.writes.len()];
        let mut idx = vec![0usize; read_sets.len()];
        let mut key = vec![0i64; read_sets.len()];
        'outer: loop {
            for (k, (&i, s)) in idx.iter().zip(&read_sets).enumerate() {
                key[k] = s[i];
            }
            if let Some(row) = self.rows.get(&key) {
                for (acc, vals) in allowed.iter_mut().zip(row) {
                    acc.extend(vals.iter().copied());
                }
            }
            let mut k = 0;
            loop {
                if k == idx.len() {
                    break 'outer;
                }
                idx[k] += 1;
                if idx[k] < read_sets[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
        let mut out = d.clone();
        for (&w, vals) in self.writes.iter().zip(allowed) {
            out.narrow(w, &VarDomain::set(vals));
        }
        out
    }
}
