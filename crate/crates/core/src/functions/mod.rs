//! Reduction functions: contracting, monotonic transformers on [`Domain`]s.
//!
//! Every concrete function is in projection form: it intersects the
//! components it writes with a value computed from the components it reads.
//! The dependency-driven update policy of the engine relies on this, so the
//! read/write sets declared here must be exact supersets of what `apply`
//! actually looks at and modifies.

pub mod arith;
pub mod expr;
pub mod fd;
pub mod interval;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use expr::{ArithConstraint, CmpRel, Expr};
pub use fd::{BinaryConstraint, NarrowingTable, RelOp};
pub use interval::LinearSystem;

use crate::lattice::{Domain, VarDomain};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain kind error: {0}")]
    Kind(String),
    #[error("constraint `{constraint}` cannot back a {kind} function")]
    WrongConstraint {
        constraint: String,
        kind: &'static str,
    },
    #[error("variable {var} is not in the scope of constraint `{constraint}`")]
    NotInScope { constraint: String, var: usize },
}

/// Index of a function inside its [`FunctionSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctionId(pub usize);

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintForm<S = f64> {
    Binary(BinaryConstraint),
    Arith(ArithConstraint<S>),
    Linear(LinearSystem<S>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<S = f64> {
    pub id: String,
    pub form: ConstraintForm<S>,
}

impl<S: Scalar> Constraint<S> {
    pub fn new(id: impl Into<String>, form: ConstraintForm<S>) -> Self {
        Constraint {
            id: id.into(),
            form,
        }
    }

    /// Variables of the constraint, ascending and duplicate-free.
    pub fn vars(&self) -> Vec<usize> {
        let mut v = match &self.form {
            ConstraintForm::Binary(b) => {
                let (x, y) = b.scope();
                vec![x, y]
            }
            ConstraintForm::Arith(a) => a.vars().to_vec(),
            ConstraintForm::Linear(l) => l.vars().to_vec(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }
}

pub type CustomBody<S> = Arc<dyn Fn(&Domain<S>) -> Domain<S> + Send + Sync>;

/// Function bodies that are not derived from a declared constraint.
#[derive(Clone)]
pub enum UserFunction<S = f64> {
    Table(NarrowingTable),
    /// Intersects each listed variable with a fixed domain.
    Constant(Vec<(usize, VarDomain<S>)>),
    /// Arbitrary body; the caller vouches for the declared reads/writes.
    Custom(CustomBody<S>),
}

impl<S: fmt::Debug> fmt::Debug for UserFunction<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UserFunction::Table(t) => f.debug_tuple("Table").field(t).finish(),
            UserFunction::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            UserFunction::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FunctionKind<S = f64> {
    Revise {
        constraint: Arc<Constraint<S>>,
        target: usize,
    },
    Hc4Revise {
        constraint: Arc<Constraint<S>>,
    },
    BoxNarrow {
        constraint: Arc<Constraint<S>>,
        target: usize,
        eps: S,
    },
    GaussSeidelSweep {
        constraint: Arc<Constraint<S>>,
    },
    UserTable(UserFunction<S>),
}

impl<S> FunctionKind<S> {
    pub fn label(&self) -> &'static str {
        match self {
            FunctionKind::Revise { .. } => "revise",
            FunctionKind::Hc4Revise { .. } => "hc4",
            FunctionKind::BoxNarrow { .. } => "box",
            FunctionKind::GaussSeidelSweep { .. } => "gauss-seidel",
            FunctionKind::UserTable(_) => "table",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReductionFunction<S = f64> {
    id: FunctionId,
    name: String,
    kind: FunctionKind<S>,
    reads: Vec<usize>,
    writes: Vec<usize>,
    priority: i64,
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

impl<S: Scalar> ReductionFunction<S> {
    fn build(
        name: impl Into<String>,
        kind: FunctionKind<S>,
        reads: Vec<usize>,
        writes: Vec<usize>,
    ) -> Self {
        ReductionFunction {
            id: FunctionId(usize::MAX),
            name: name.into(),
            kind,
            reads: sorted(reads),
            writes: sorted(writes),
            priority: 0,
        }
    }

    /// Arc revision of `target` under a binary finite-domain constraint.
    pub fn revise(
        name: impl Into<String>,
        constraint: Arc<Constraint<S>>,
        target: usize,
    ) -> Result<Self, FunctionError> {
        let ConstraintForm::Binary(b) = &constraint.form else {
            return Err(FunctionError::WrongConstraint {
                constraint: constraint.id.clone(),
                kind: "revise",
            });
        };
        let (x, y) = b.scope();
        if target != x && target != y {
            return Err(FunctionError::NotInScope {
                constraint: constraint.id.clone(),
                var: target,
            });
        }
        let reads = vec![x, y];
        Ok(Self::build(
            name,
            FunctionKind::Revise { constraint, target },
            reads,
            vec![target],
        ))
    }

    /// Forward/backward projection narrowing all variables of the constraint.
    pub fn hc4(
        name: impl Into<String>,
        constraint: Arc<Constraint<S>>,
    ) -> Result<Self, FunctionError> {
        if !matches!(constraint.form, ConstraintForm::Arith(_)) {
            return Err(FunctionError::WrongConstraint {
                constraint: constraint.id.clone(),
                kind: "hc4",
            });
        }
        let vars = constraint.vars();
        Ok(Self::build(
            name,
            FunctionKind::Hc4Revise { constraint },
            vars.clone(),
            vars,
        ))
    }

    pub fn box_narrow(
        name: impl Into<String>,
        constraint: Arc<Constraint<S>>,
        target: usize,
        eps: S,
    ) -> Result<Self, FunctionError> {
        if !matches!(constraint.form, ConstraintForm::Arith(_)) {
            return Err(FunctionError::WrongConstraint {
                constraint: constraint.id.clone(),
                kind: "box",
            });
        }
        if eps.is_nan() || eps <= S::zero() {
            return Err(FunctionError::Parameter(format!(
                "box narrowing needs eps > 0, got {eps}"
            )));
        }
        let vars = constraint.vars();
        if !vars.contains(&target) {
            return Err(FunctionError::NotInScope {
                constraint: constraint.id.clone(),
                var: target,
            });
        }
        Ok(Self::build(
            name,
            FunctionKind::BoxNarrow {
                constraint,
                target,
                eps,
            },
            vars,
            vec![target],
        ))
    }

    pub fn gauss_seidel(
        name: impl Into<String>,
        constraint: Arc<Constraint<S>>,
    ) -> Result<Self, FunctionError> {
        if !matches!(constraint.form, ConstraintForm::Linear(_)) {
            return Err(FunctionError::WrongConstraint {
                constraint: constraint.id.clone(),
                kind: "gauss-seidel",
            });
        }
        let vars = constraint.vars();
        Ok(Self::build(
            name,
            FunctionKind::GaussSeidelSweep { constraint },
            vars.clone(),
            vars,
        ))
    }

    pub fn table(name: impl Into<String>, table: NarrowingTable) -> Self {
        let (r, w) = (table.reads().to_vec(), table.writes().to_vec());
        Self::build(
            name,
            FunctionKind::UserTable(UserFunction::Table(table)),
            r,
            w,
        )
    }

    pub fn constant(name: impl Into<String>, assignments: Vec<(usize, VarDomain<S>)>) -> Self {
        let vars: Vec<usize> = assignments.iter().map(|(v, _)| *v).collect();
        Self::build(
            name,
            FunctionKind::UserTable(UserFunction::Constant(assignments)),
            vars.clone(),
            vars,
        )
    }

    pub fn custom<F>(
        name: impl Into<String>,
        reads: Vec<usize>,
        writes: Vec<usize>,
        body: F,
    ) -> Self
    where
        F: Fn(&Domain<S>) -> Domain<S> + Send + Sync + 'static,
    {
        Self::build(
            name,
            FunctionKind::UserTable(UserFunction::Custom(Arc::new(body))),
            reads,
            writes,
        )
    }

    pub fn with_priority(mut self, priority: i64) -> Self {
        self.priority = priority;
        self
    }

    pub fn id(&self) -> FunctionId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &FunctionKind<S> {
        &self.kind
    }

    pub fn reads(&self) -> &[usize] {
        &self.reads
    }

    pub fn writes(&self) -> &[usize] {
        &self.writes
    }

    pub fn priority(&self) -> i64 {
        self.priority
    }

    pub fn constraint(&self) -> Option<&Constraint<S>> {
        match &self.kind {
            FunctionKind::Revise { constraint, .. }
            | FunctionKind::Hc4Revise { constraint }
            | FunctionKind::BoxNarrow { constraint, .. }
            | FunctionKind::GaussSeidelSweep { constraint } => Some(constraint),
            FunctionKind::UserTable(_) => None,
        }
    }

    /// `f(d)`. The result is a subset of `d` and differs from it only on
    /// `writes()`. Components of the wrong kind are left alone.
    pub fn apply(&self, d: &Domain<S>) -> Domain<S> {
        if d.is_empty() {
            return d.clone();
        }
        match &self.kind {
            FunctionKind::Revise { constraint, target } => match &constraint.form {
                ConstraintForm::Binary(b) => fd::revise(b, *target, d).unwrap_or_else(|| d.clone()),
                _ => d.clone(),
            },
            FunctionKind::Hc4Revise { constraint } => match &constraint.form {
                ConstraintForm::Arith(a) => a.hc4_revise(d),
                _ => d.clone(),
            },
            FunctionKind::BoxNarrow {
                constraint,
                target,
                eps,
            } => match &constraint.form {
                ConstraintForm::Arith(a) => {
                    interval::box_narrow(a, *target, d, *eps).unwrap_or_else(|_| d.clone())
                }
                _ => d.clone(),
            },
            FunctionKind::GaussSeidelSweep { constraint } => match &constraint.form {
                ConstraintForm::Linear(l) => l.sweep(d),
                _ => d.clone(),
            },
            FunctionKind::UserTable(UserFunction::Table(t)) => t.apply(d),
            FunctionKind::UserTable(UserFunction::Constant(assignments)) => {
                let mut out = d.clone();
                for (v, dom) in assignments {
                    out.narrow(*v, dom);
                }
                out
            }
            FunctionKind::UserTable(UserFunction::Custom(body)) => body(d),
        }
    }

    /// Idempotence that holds by construction (arc revision, constants,
    /// and the simultaneous arc-consistency projection).
    pub fn known_idempotent(&self) -> bool {
        matches!(
            self.kind,
            FunctionKind::Revise { .. } | FunctionKind::UserTable(UserFunction::Constant(_))
        )
    }
}

/// The finite set `F` of reduction functions, indexed by [`FunctionId`].
#[derive(Debug, Clone, Default)]
pub struct FunctionSet<S = f64> {
    functions: Vec<ReductionFunction<S>>,
}

impl<S: Scalar> FunctionSet<S> {
    pub fn new() -> Self {
        FunctionSet {
            functions: Vec::new(),
        }
    }

    pub fn add(&mut self, mut f: ReductionFunction<S>) -> FunctionId {
        let id = FunctionId(self.functions.len());
        f.id = id;
        self.functions.push(f);
        id
    }

    pub fn get(&self, id: FunctionId) -> Option<&ReductionFunction<S>> {
        self.functions.get(id.0)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReductionFunction<S>> {
        self.functions.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = FunctionId> + '_ {
        (0..self.functions.len()).map(FunctionId)
    }

    pub fn by_name(&self, name: &str) -> Option<FunctionId> {
        self.functions.iter().find(|f| f.name == name).map(|f| f.id)
    }

    /// A new set holding copies of `ids`, renumbered from zero in the
    /// given order.
    pub fn subset(&self, ids: &[FunctionId]) -> FunctionSet<S> {
        let mut out = FunctionSet::new();
        for id in ids {
            out.add(self.functions[id.0].clone());
        }
        out
    }

    pub fn name_of(&self, id: FunctionId) -> String {
        self.get(id)
            .map_or_else(|| id.to_string(), |f| f.name.clone())
    }
}

impl<S: Scalar> FromIterator<ReductionFunction<S>> for FunctionSet<S> {
    fn from_iter<T: IntoIterator<Item = ReductionFunction<S>>>(iter: T) -> Self {
        let mut set = FunctionSet::new();
        for f in iter {
            set.add(f);
        }
        set
    }
}

/// True when `f` and `g` cannot observe each other's effects: neither writes
/// what the other reads, and they write disjoint variables.
pub fn structurally_independent<S: Scalar>(
    f: &ReductionFunction<S>,
    g: &ReductionFunction<S>,
) -> bool {
    let disjoint = |a: &[usize], b: &[usize]| a.iter().all(|v| !b.contains(v));
    disjoint(f.writes(), g.reads())
        && disjoint(g.writes(), f.reads())
        && disjoint(f.writes(), g.writes())
}
