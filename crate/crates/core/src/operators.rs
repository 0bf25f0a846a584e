//! Composition operators over a [`FunctionSet`]: sequence, closure and
//! decoupling, plus enumeration-checked algebraic properties.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::functions::{FunctionId, FunctionSet};
use crate::lattice::Domain;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OperatorError {
    #[error("{0} has no children")]
    Empty(&'static str),
    #[error("unknown function {0}")]
    UnknownFunction(FunctionId),
    #[error("unknown function name `{0}`")]
    UnknownName(String),
    #[error("syntax error at offset {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("property {0:?} needs a second subject")]
    MissingSubject(PropertyKind),
    #[error("empty verification scope")]
    EmptyScope,
}

/// `Seq` applies its LAST child first: `Seq([f, g])(d) = f(g(d))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CompositionOperator {
    Atomic(FunctionId),
    Seq(Vec<CompositionOperator>),
    Gfp(Vec<CompositionOperator>),
    Par(Vec<CompositionOperator>),
}

use CompositionOperator as Op;

impl CompositionOperator {
    pub fn atomic(id: FunctionId) -> Self {
        Op::Atomic(id)
    }

    pub fn seq(children: Vec<Op>) -> Result<Self, OperatorError> {
        if children.is_empty() {
            return Err(OperatorError::Empty("seq"));
        }
        Ok(Op::Seq(children))
    }

    pub fn gfp(children: Vec<Op>) -> Result<Self, OperatorError> {
        if children.is_empty() {
            return Err(OperatorError::Empty("gfp"));
        }
        Ok(Op::Gfp(children))
    }

    pub fn par(children: Vec<Op>) -> Result<Self, OperatorError> {
        if children.is_empty() {
            return Err(OperatorError::Empty("par"));
        }
        Ok(Op::Par(children))
    }

    /// Closure of the given atomic functions.
    pub fn gfp_of(ids: impl IntoIterator<Item = FunctionId>) -> Result<Self, OperatorError> {
        Self::gfp(ids.into_iter().map(Op::Atomic).collect())
    }

    pub fn children(&self) -> &[Op] {
        match self {
            Op::Atomic(_) => &[],
            Op::Seq(c) | Op::Gfp(c) | Op::Par(c) => c,
        }
    }

    pub fn generator(&self) -> BTreeSet<FunctionId> {
        let mut out = BTreeSet::new();
        self.collect_generator(&mut out);
        out
    }

    fn collect_generator(&self, out: &mut BTreeSet<FunctionId>) {
        match self {
            Op::Atomic(id) => {
                out.insert(*id);
            }
            Op::Seq(c) | Op::Gfp(c) | Op::Par(c) => {
                c.iter().for_each(|op| op.collect_generator(out))
            }
        }
    }

    /// Checks non-emptiness and that every leaf resolves in `functions`.
    pub fn validate<S: Scalar>(&self, functions: &FunctionSet<S>) -> Result<(), OperatorError> {
        match self {
            Op::Atomic(id) => functions
                .get(*id)
                .map(|_| ())
                .ok_or(OperatorError::UnknownFunction(*id)),
            Op::Seq(c) | Op::Gfp(c) | Op::Par(c) => {
                if c.is_empty() {
                    return Err(OperatorError::Empty(self.tag()));
                }
                c.iter().try_for_each(|op| op.validate(functions))
            }
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Op::Atomic(_) => "atomic",
            Op::Seq(_) => "seq",
            Op::Gfp(_) => "gfp",
            Op::Par(_) => "par",
        }
    }

    /// Closure, or a one-element sequence/decoupling around one. Such an
    /// operator's output is a fixed-point of every function in its
    /// generator.
    pub fn is_closure_like(&self) -> bool {
        match self {
            Op::Gfp(_) => true,
            Op::Seq(c) | Op::Par(c) => c.len() == 1 && c[0].is_closure_like(),
            Op::Atomic(_) => false,
        }
    }

    /// Text form using function names, e.g. `seq(gfp(f1, f2), f3)`.
    pub fn render<S: Scalar>(&self, functions: &FunctionSet<S>) -> String {
        match self {
            Op::Atomic(id) => functions.name_of(*id),
            Op::Seq(c) | Op::Gfp(c) | Op::Par(c) => {
                let inner: Vec<String> = c.iter().map(|op| op.render(functions)).collect();
                format!("{}({})", self.tag(), inner.join(", "))
            }
        }
    }

    /// Inverse of [`render`](Self::render).
    pub fn parse<S: Scalar>(text: &str, functions: &FunctionSet<S>) -> Result<Self, OperatorError> {
        let mut p = OpParser { src: text, pos: 0 };
        let op = p.operator(functions)?;
        p.skip_ws();
        if p.pos != text.len() {
            return Err(p.error("trailing input"));
        }
        Ok(op)
    }
}

impl fmt::Display for CompositionOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Atomic(id) => write!(f, "{id}"),
            Op::Seq(c) | Op::Gfp(c) | Op::Par(c) => {
                write!(f, "{}(", self.tag())?;
                for (i, op) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{op}")?;
                }
                f.write_str(")")
            }
        }
    }
}

struct OpParser<'a> {
    src: &'a str,
    pos: usize,
}

impl OpParser<'_> {
    fn error(&self, msg: &str) -> OperatorError {
        OperatorError::Syntax {
            offset: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn ident(&mut self) -> Result<&str, OperatorError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .find(|c: char| c == '(' || c == ')' || c == ',' || c.is_whitespace())
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(self.error("expected a name"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn operator<S: Scalar>(&mut self, functions: &FunctionSet<S>) -> Result<Op, OperatorError> {
        let name = self.ident()?.to_string();
        if !self.eat('(') {
            return functions
                .by_name(&name)
                .map(Op::Atomic)
                .ok_or(OperatorError::UnknownName(name));
        }
        let mut children = vec![self.operator(functions)?];
        while self.eat(',') {
            children.push(self.operator(functions)?);
        }
        if !self.eat(')') {
            return Err(self.error("expected `)`"));
        }
        match name.as_str() {
            "seq" => Op::seq(children),
            "gfp" => Op::gfp(children),
            "par" => Op::par(children),
            _ => Err(self.error("expected seq, gfp or par")),
        }
    }
}

/// Work done by one evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub applications: u64,
    pub closure_passes: u64,
}

impl std::ops::AddAssign for EvalCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.applications += rhs.applications;
        self.closure_passes += rhs.closure_passes;
    }
}

/// Evaluates operators against a function table. With `threads > 1` the
/// children of a `Par` node run on scoped threads; the result does not
/// depend on the thread count.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator<'a, S = f64> {
    functions: &'a FunctionSet<S>,
    threads: usize,
}

impl<'a, S: Scalar> Evaluator<'a, S> {
    pub fn new(functions: &'a FunctionSet<S>) -> Self {
        Evaluator {
            functions,
            threads: 1,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn functions(&self) -> &'a FunctionSet<S> {
        self.functions
    }

    pub fn eval(&self, op: &Op, d: &Domain<S>) -> Result<(Domain<S>, EvalCounts), OperatorError> {
        op.validate(self.functions)?;
        let mut counts = EvalCounts::default();
        let out = self.run(op, d, &mut counts);
        Ok((out, counts))
    }

    fn run(&self, op: &Op, d: &Domain<S>, counts: &mut EvalCounts) -> Domain<S> {
        if d.is_empty() {
            return d.clone();
        }
        match op {
            Op::Atomic(id) => {
                counts.applications += 1;
                self.functions.get(*id).expect("validated").apply(d)
            }
            Op::Seq(children) => {
                let mut cur = d.clone();
                for child in children.iter().rev() {
                    cur = self.run(child, &cur, counts);
                    if cur.is_empty() {
                        break;
                    }
                }
                cur
            }
            Op::Gfp(children) => self.closure(children, d, counts),
            Op::Par(children) => self.decouple(children, d, counts),
        }
    }

    /// Round-robin over the children until `k` consecutive applications
    /// leave the domain unchanged. Then the domain is a fixed-point of all
    /// of them, which by confluence is the greatest one below `d`.
    fn closure(&self, children: &[Op], d: &Domain<S>, counts: &mut EvalCounts) -> Domain<S> {
        let k = children.len();
        let mut cur = d.clone();
        let mut stable = 0;
        let mut i = 0;
        while stable < k {
            if i == 0 {
                counts.closure_passes += 1;
            }
            let next = self.run(&children[i], &cur, counts);
            if next.is_empty() {
                return next;
            }
            if next == cur {
                stable += 1;
            } else {
                // an idempotent child already sits at its own fixed-point
                stable = usize::from(self.settles(&children[i]));
                cur = next;
            }
            i = (i + 1) % k;
        }
        cur
    }

    fn settles(&self, op: &Op) -> bool {
        match op {
            Op::Atomic(id) => self
                .functions
                .get(*id)
                .is_some_and(|f| f.known_idempotent()),
            _ => op.is_closure_like(),
        }
    }

    fn decouple(&self, children: &[Op], d: &Domain<S>, counts: &mut EvalCounts) -> Domain<S> {
        let threads = self.threads.min(children.len());
        let results: Vec<(Domain<S>, EvalCounts)> = if threads <= 1 {
            children
                .iter()
                .map(|c| {
                    let mut local = EvalCounts::default();
                    (self.run(c, d, &mut local), local)
                })
                .collect()
        } else {
            let chunk = children.len().div_ceil(threads);
            std::thread::scope(|scope| {
                let handles: Vec<_> = children
                    .chunks(chunk)
                    .map(|part| {
                        scope.spawn(move || {
                            part.iter()
                                .map(|c| {
                                    let mut local = EvalCounts::default();
                                    (self.run(c, d, &mut local), local)
                                })
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().expect("par branch panicked"))
                    .collect()
            })
        };
        let mut out = d.clone();
        for (r, c) in results {
            *counts += c;
            out = out.meet(&r).expect("branches share the variable list");
        }
        out
    }
}

/// Sequential evaluation without counters.
pub fn eval<S: Scalar>(
    op: &Op,
    d: &Domain<S>,
    functions: &FunctionSet<S>,
) -> Result<Domain<S>, OperatorError> {
    Evaluator::new(functions).eval(op, d).map(|(out, _)| out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PropertyKind {
    Idempotent,
    Commute,
    /// `a` semi-commutes with `b`: `b(a(x)) ⊆ a(b(x))`.
    SemiCommutesWith,
    /// `a(x) ⊆ b(x)`.
    StrongerThan,
    Independent,
    Redundant,
    WeaklyRedundant,
}

impl PropertyKind {
    pub fn is_binary(self) -> bool {
        self != PropertyKind::Idempotent
    }

    fn symmetric(self) -> bool {
        matches!(
            self,
            PropertyKind::Commute
                | PropertyKind::Independent
                | PropertyKind::Redundant
                | PropertyKind::WeaklyRedundant
        )
    }
}

/// Where a fact was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Checked on this many lattice elements.
    Checked(usize),
    /// Derived from read/write sets of projection-form functions.
    Structural,
    /// Supplied by the caller without verification.
    Asserted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyFact {
    pub kind: PropertyKind,
    pub subjects: (Op, Option<Op>),
    pub scope: Scope,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyCheck<S = f64> {
    Holds(PropertyFact),
    Refuted {
        kind: PropertyKind,
        witness: Domain<S>,
    },
}

impl<S> PropertyCheck<S> {
    pub fn holds(&self) -> bool {
        matches!(self, PropertyCheck::Holds(_))
    }
}

/// Checks the defining equation of `kind` at every element of `scope`.
pub fn check_property<S: Scalar>(
    kind: PropertyKind,
    a: &Op,
    b: Option<&Op>,
    scope: &[Domain<S>],
    functions: &FunctionSet<S>,
) -> Result<PropertyCheck<S>, OperatorError> {
    if scope.is_empty() {
        return Err(OperatorError::EmptyScope);
    }
    a.validate(functions)?;
    let b = match (kind.is_binary(), b) {
        (true, None) => return Err(OperatorError::MissingSubject(kind)),
        (true, Some(b)) => {
            b.validate(functions)?;
            Some(b)
        }
        (false, _) => None,
    };
    let ev = Evaluator::new(functions);
    let f = |op: &Op, x: &Domain<S>| ev.run(op, x, &mut EvalCounts::default());
    let closure = |op: &Op, x: &Domain<S>| f(&Op::Gfp(vec![op.clone()]), x);
    for x in scope {
        let ok = match (kind, b) {
            (PropertyKind::Idempotent, _) => {
                let fx = f(a, x);
                f(a, &fx) == fx
            }
            (PropertyKind::Commute, Some(b)) => f(a, &f(b, x)) == f(b, &f(a, x)),
            (PropertyKind::SemiCommutesWith, Some(b)) => {
                f(b, &f(a, x)).leq(&f(a, &f(b, x))).unwrap_or(false)
            }
            (PropertyKind::StrongerThan, Some(b)) => f(a, x).leq(&f(b, x)).unwrap_or(false),
            (PropertyKind::Independent, Some(b)) => {
                let ab = f(a, &f(b, x));
                let ba = f(b, &f(a, x));
                let meet = f(a, x).meet(&f(b, x)).expect("same variables");
                ab == ba && ab == meet
            }
            (PropertyKind::Redundant, Some(b)) => f(a, x) == f(b, x),
            (PropertyKind::WeaklyRedundant, Some(b)) => closure(a, x) == closure(b, x),
            (_, None) => unreachable!("binary kinds have a second subject"),
        };
        if !ok {
            return Ok(PropertyCheck::Refuted {
                kind,
                witness: x.clone(),
            });
        }
    }
    Ok(PropertyCheck::Holds(PropertyFact {
        kind,
        subjects: (a.clone(), b.cloned()),
        scope: Scope::Checked(scope.len()),
    }))
}

/// Collection of established facts, queried by the idempotence predicate,
/// closure simplification and the strategies.
impl Extend<PropertyFact> for FactBase {
    fn extend<I: IntoIterator<Item = PropertyFact>>(&mut self, iter: I) {
        iter.into_iter().for_each(|f| self.add(f));
    }
}

#[derive(Debug, Clone, Default)]
pub struct FactBase {
    facts: Vec<PropertyFact>,
}

impl FactBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, fact: PropertyFact) {
        if !self.facts.contains(&fact) {
            self.facts.push(fact);
        }
    }

    /// Records a fact without checking it.
    pub fn assert(&mut self, kind: PropertyKind, a: Op, b: Option<Op>) {
        self.add(PropertyFact {
            kind,
            subjects: (a, b),
            scope: Scope::Asserted,
        });
    }

    /// Independence facts for every structurally independent pair of
    /// functions in `functions`.
    pub fn structural<S: Scalar>(functions: &FunctionSet<S>) -> Self {
        let mut facts = FactBase::new();
        let all: Vec<_> = functions.iter().collect();
        for (i, f) in all.iter().enumerate() {
            for g in &all[i + 1..] {
                if crate::functions::structurally_independent(f, g) {
                    facts.add(PropertyFact {
                        kind: PropertyKind::Independent,
                        subjects: (Op::Atomic(f.id()), Some(Op::Atomic(g.id()))),
                        scope: Scope::Structural,
                    });
                }
            }
        }
        facts
    }

    pub fn iter(&self) -> impl Iterator<Item = &PropertyFact> {
        self.facts.iter()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn holds(&self, kind: PropertyKind, a: &Op, b: Option<&Op>) -> bool {
        self.facts.iter().any(|f| {
            f.kind == kind
                && ((&f.subjects.0 == a && f.subjects.1.as_ref() == b)
                    || (kind.symmetric()
                        && Some(&f.subjects.0) == b
                        && f.subjects.1.as_ref() == Some(a)))
        })
    }

    fn idempotent(&self, op: &Op) -> bool {
        self.holds(PropertyKind::Idempotent, op, None) || is_idempotent_operator(op, self)
    }

    fn semi_commutes(&self, a: &Op, b: &Op) -> bool {
        self.holds(PropertyKind::SemiCommutesWith, a, Some(b))
            || self.holds(PropertyKind::Commute, a, Some(b))
            || self.holds(PropertyKind::Independent, a, Some(b))
    }
}

/// Sufficient conditions for idempotence. `false` means "not established",
/// not "not idempotent".
pub fn is_idempotent_operator(op: &Op, facts: &FactBase) -> bool {
    match op {
        Op::Atomic(_) => facts.holds(PropertyKind::Idempotent, op, None),
        Op::Gfp(_) => true,
        // children listed φ1..φk; φk is applied first
        Op::Seq(c) => {
            let all_idempotent = c.iter().all(|x| facts.idempotent(x));
            let semi = (0..c.len()).all(|i| (0..i).all(|j| facts.semi_commutes(&c[i], &c[j])));
            if all_idempotent && semi {
                return true;
            }
            facts.idempotent(&c[0])
                && (1..c.len()).all(|i| {
                    (0..i).any(|j| facts.holds(PropertyKind::StrongerThan, &c[j], Some(&c[i])))
                })
        }
        Op::Par(c) => {
            c.iter().all(|x| facts.idempotent(x))
                && (0..c.len()).all(|i| {
                    (0..i).all(|j| facts.holds(PropertyKind::Independent, &c[i], Some(&c[j])))
                })
        }
    }
}

/// Rewrites `Gfp(children ∪ {varphi})` using the facts: drops `varphi`
/// when it is weakly redundant with a child, splits it off into its own
/// closure when it is independent of every child.
pub fn simplify_closure(
    children: Vec<Op>,
    varphi: Op,
    facts: &FactBase,
) -> Result<Op, OperatorError> {
    if children.is_empty() {
        return Op::gfp(vec![varphi]);
    }
    if children
        .iter()
        .any(|c| facts.holds(PropertyKind::WeaklyRedundant, &varphi, Some(c)))
    {
        return Op::gfp(children);
    }
    if children
        .iter()
        .all(|c| facts.holds(PropertyKind::Independent, &varphi, Some(c)))
    {
        return Op::par(vec![Op::gfp(children)?, Op::gfp(vec![varphi])?]);
    }
    let mut all = children;
    all.push(varphi);
    Op::gfp(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::ReductionFunction;
    use crate::lattice::{enumerate_lattice, var_list, VarDomain};

    fn fd(xs: &[i64], ys: &[i64]) -> Domain {
        Domain::with_vars(
            var_list(["x", "y"]),
            vec![
                VarDomain::set(xs.iter().copied()),
                VarDomain::set(ys.iter().copied()),
            ],
        )
        .unwrap()
    }

    /// f0: x ∩ {1,2}; f1: x ∩ {2,3}; f2: y := {v ∈ y | v ≥ min x}; f3: y ∩ {2,3}
    fn functions() -> FunctionSet {
        let mut set = FunctionSet::new();
        set.add(ReductionFunction::constant(
            "a",
            vec![(0, VarDomain::set([1, 2]))],
        ));
        set.add(ReductionFunction::constant(
            "b",
            vec![(0, VarDomain::set([2, 3]))],
        ));
        set.add(ReductionFunction::custom(
            "c",
            vec![0, 1],
            vec![1],
            |d: &Domain| {
                let mut out = d.clone();
                if let (Some(x), Some(y)) = (d.get(0).as_set(), d.get(1).as_set()) {
                    let lo = x.min();
                    out.narrow(
                        1,
                        &VarDomain::set(y.values().iter().copied().filter(|&v| v >= lo)),
                    );
                }
                out
            },
        ));
        set.add(ReductionFunction::constant(
            "d",
            vec![(1, VarDomain::set([2, 3]))],
        ));
        set
    }

    fn lattice() -> Vec<Domain> {
        enumerate_lattice(
            &var_list(["x", "y"]),
            &[vec![1, 2, 3], vec![1, 2, 3]],
            1 << 10,
        )
        .unwrap()
    }

    fn at(i: usize) -> Op {
        Op::Atomic(FunctionId(i))
    }

    #[test]
    fn seq_applies_last_child_first() {
        let f = functions();
        let d = fd(&[1, 2, 3], &[1, 2, 3]);
        // b then c: x={2,3}, y={2,3}
        let op = Op::seq(vec![at(2), at(1)]).unwrap();
        assert_eq!(eval(&op, &d, &f).unwrap(), fd(&[2, 3], &[2, 3]));
        // c then b: y keeps 1 since min x was 1
        let op = Op::seq(vec![at(1), at(2)]).unwrap();
        assert_eq!(eval(&op, &d, &f).unwrap(), fd(&[2, 3], &[1, 2, 3]));
    }

    #[test]
    fn par_meets_on_same_input() {
        let f = functions();
        let d = fd(&[1, 2, 3], &[1, 2, 3]);
        let op = Op::par(vec![at(0), at(1)]).unwrap();
        assert_eq!(eval(&op, &d, &f).unwrap(), fd(&[2], &[1, 2, 3]));
        let op = Op::par(vec![at(1), at(2)]).unwrap();
        assert_eq!(eval(&op, &d, &f).unwrap(), fd(&[2, 3], &[1, 2, 3]));
    }

    #[test]
    fn gfp_reaches_common_fixed_point_and_is_idempotent() {
        let f = functions();
        let op = Op::gfp(vec![at(2), at(1)]).unwrap();
        for d in lattice() {
            let once = eval(&op, &d, &f).unwrap();
            assert_eq!(eval(&op, &once, &f).unwrap(), once);
            for id in [1, 2] {
                assert_eq!(f.get(FunctionId(id)).unwrap().apply(&once), once);
            }
        }
    }

    /// Literal iteration of x ↦ ∩ φᵢ(x) until stable.
    fn literal_closure(children: &[Op], d: &Domain, f: &FunctionSet) -> Domain {
        let mut cur = d.clone();
        loop {
            let mut next = cur.clone();
            for c in children {
                next = next.meet(&eval(c, &cur, f).unwrap()).unwrap();
            }
            if next == cur {
                return cur;
            }
            cur = next;
        }
    }

    #[test]
    fn round_robin_closure_equals_literal_meet_iteration() {
        let f = functions();
        let children = vec![at(0), at(2), at(3), Op::seq(vec![at(2), at(1)]).unwrap()];
        let op = Op::gfp(children.clone()).unwrap();
        for d in lattice() {
            assert_eq!(
                eval(&op, &d, &f).unwrap(),
                literal_closure(&children, &d, &f)
            );
        }
    }

    #[test]
    fn generator_examples() {
        assert_eq!(at(1).generator(), BTreeSet::from([FunctionId(1)]));
        let op = Op::seq(vec![at(1), Op::gfp(vec![at(2), at(3)]).unwrap()]).unwrap();
        assert_eq!(
            op.generator(),
            BTreeSet::from([FunctionId(1), FunctionId(2), FunctionId(3)])
        );
        let op = Op::par(vec![Op::gfp(vec![at(1)]).unwrap(), at(1)]).unwrap();
        assert_eq!(op.generator(), BTreeSet::from([FunctionId(1)]));
    }

    #[test]
    fn empty_children_and_unknown_leaves_are_rejected() {
        assert_eq!(Op::seq(vec![]), Err(OperatorError::Empty("seq")));
        assert_eq!(Op::gfp(vec![]), Err(OperatorError::Empty("gfp")));
        let f = functions();
        let d = fd(&[1], &[1]);
        assert_eq!(
            eval(&at(9), &d, &f),
            Err(OperatorError::UnknownFunction(FunctionId(9)))
        );
    }

    #[test]
    fn render_and_parse_round_trip() {
        let f = functions();
        let op = Op::seq(vec![Op::gfp(vec![at(0), at(1)]).unwrap(), at(2)]).unwrap();
        assert_eq!(op.render(&f), "seq(gfp(a, b), c)");
        assert_eq!(Op::parse("seq( gfp(a,b) ,c)", &f).unwrap(), op);
        assert_eq!(
            Op::parse("par(gfp(a), gfp(d))", &f).unwrap().render(&f),
            "par(gfp(a), gfp(d))"
        );
        assert!(matches!(
            Op::parse("seq(a", &f),
            Err(OperatorError::Syntax { .. })
        ));
        assert!(matches!(
            Op::parse("foo(a)", &f),
            Err(OperatorError::Syntax { .. })
        ));
        assert_eq!(
            Op::parse("zz", &f),
            Err(OperatorError::UnknownName("zz".into()))
        );
    }

    #[test]
    fn property_checks() {
        let f = functions();
        let scope = lattice();
        assert!(
            check_property(PropertyKind::Idempotent, &at(0), None, &scope, &f)
                .unwrap()
                .holds()
        );
        // a writes x only, d writes y only, neither reads the other's variable
        assert!(
            check_property(PropertyKind::Independent, &at(0), Some(&at(3)), &scope, &f)
                .unwrap()
                .holds()
        );
        assert!(
            !check_property(PropertyKind::Independent, &at(1), Some(&at(2)), &scope, &f)
                .unwrap()
                .holds()
        );
        // stronger = weak followed by extra pruning
        let strong = Op::seq(vec![at(0), at(1)]).unwrap();
        assert!(check_property(
            PropertyKind::StrongerThan,
            &strong,
            Some(&at(1)),
            &scope,
            &f
        )
        .unwrap()
        .holds());
        match check_property(
            PropertyKind::StrongerThan,
            &at(1),
            Some(&strong),
            &scope,
            &f,
        )
        .unwrap()
        {
            PropertyCheck::Refuted { witness, .. } => {
                let w1 = eval(&at(1), &witness, &f).unwrap();
                let ws = eval(&strong, &witness, &f).unwrap();
                assert!(!w1.leq(&ws).unwrap());
            }
            PropertyCheck::Holds(_) => panic!("b is not stronger than seq(a, b)"),
        }
        assert_eq!(
            check_property(PropertyKind::Commute, &at(0), None, &scope, &f),
            Err(OperatorError::MissingSubject(PropertyKind::Commute))
        );
        assert_eq!(
            check_property::<f64>(PropertyKind::Idempotent, &at(0), None, &[], &f),
            Err(OperatorError::EmptyScope)
        );
    }

    fn checked(kind: PropertyKind, a: &Op, b: Option<&Op>, f: &FunctionSet, facts: &mut FactBase) {
        match check_property(kind, a, b, &lattice(), f).unwrap() {
            PropertyCheck::Holds(fact) => facts.add(fact),
            PropertyCheck::Refuted { witness, .. } => panic!("{kind:?} refuted at {witness}"),
        }
    }

    fn idempotent_on_lattice(op: &Op, f: &FunctionSet) -> bool {
        lattice().iter().all(|d| {
            let once = eval(op, d, f).unwrap();
            eval(op, &once, f).unwrap() == once
        })
    }

    #[test]
    fn idempotence_cases() {
        let f = functions();
        let facts = FactBase::new();
        let gfp = Op::gfp(vec![at(2)]).unwrap();
        assert!(is_idempotent_operator(&gfp, &facts));

        // (ii) independent idempotent functions in sequence
        let mut facts = FactBase::new();
        checked(PropertyKind::Idempotent, &at(0), None, &f, &mut facts);
        checked(PropertyKind::Idempotent, &at(3), None, &f, &mut facts);
        checked(
            PropertyKind::Independent,
            &at(0),
            Some(&at(3)),
            &f,
            &mut facts,
        );
        let op = Op::seq(vec![at(3), at(0)]).unwrap();
        assert!(is_idempotent_operator(&op, &facts));
        assert!(idempotent_on_lattice(&op, &f));

        // (iii) strong listed first (applied last), cheap applied first
        let strong = Op::par(vec![at(0), at(1)]).unwrap();
        let mut facts = FactBase::new();
        checked(PropertyKind::Idempotent, &strong, None, &f, &mut facts);
        checked(
            PropertyKind::StrongerThan,
            &strong,
            Some(&at(0)),
            &f,
            &mut facts,
        );
        let op = Op::seq(vec![strong.clone(), at(0)]).unwrap();
        assert!(is_idempotent_operator(&op, &facts));
        assert!(idempotent_on_lattice(&op, &f));
        // the reverse order is not covered by (iii)
        assert!(!is_idempotent_operator(
            &Op::seq(vec![at(0), strong]).unwrap(),
            &facts
        ));

        // (iv)
        let mut facts = FactBase::new();
        checked(PropertyKind::Idempotent, &at(0), None, &f, &mut facts);
        checked(PropertyKind::Idempotent, &at(3), None, &f, &mut facts);
        checked(
            PropertyKind::Independent,
            &at(3),
            Some(&at(0)),
            &f,
            &mut facts,
        );
        let op = Op::par(vec![at(0), at(3)]).unwrap();
        assert!(is_idempotent_operator(&op, &facts));
        assert!(idempotent_on_lattice(&op, &f));

        assert!(!is_idempotent_operator(&at(2), &FactBase::new()));
    }

    #[test]
    fn closure_simplification() {
        let f = functions();
        let scope = lattice();
        let mut facts = FactBase::new();
        checked(
            PropertyKind::Independent,
            &at(3),
            Some(&at(0)),
            &f,
            &mut facts,
        );
        checked(
            PropertyKind::Independent,
            &at(3),
            Some(&at(1)),
            &f,
            &mut facts,
        );
        let split = simplify_closure(vec![at(0), at(1)], at(3), &facts).unwrap();
        assert!(matches!(split, Op::Par(_)));
        let full = Op::gfp(vec![at(0), at(1), at(3)]).unwrap();
        for d in &scope {
            assert_eq!(eval(&split, d, &f).unwrap(), eval(&full, d, &f).unwrap());
        }

        // seq(a, a) has the same closure as a
        let twice = Op::seq(vec![at(0), at(0)]).unwrap();
        let mut facts = FactBase::new();
        checked(
            PropertyKind::WeaklyRedundant,
            &twice,
            Some(&at(0)),
            &f,
            &mut facts,
        );
        let dropped = simplify_closure(vec![at(0), at(2)], twice.clone(), &facts).unwrap();
        assert_eq!(dropped, Op::gfp(vec![at(0), at(2)]).unwrap());
        let full = Op::gfp(vec![at(0), at(2), twice.clone()]).unwrap();
        for d in &scope {
            assert_eq!(eval(&dropped, d, &f).unwrap(), eval(&full, d, &f).unwrap());
        }

        let same = simplify_closure(vec![at(0)], at(2), &FactBase::new()).unwrap();
        assert_eq!(same, Op::gfp(vec![at(0), at(2)]).unwrap());
    }

    #[test]
    fn par_threads_do_not_change_results() {
        let f = functions();
        let op = Op::par(vec![at(0), at(1), at(2), at(3)]).unwrap();
        for d in lattice() {
            let seq = Evaluator::new(&f).eval(&op, &d).unwrap();
            for t in [2, 3, 4, 8] {
                assert_eq!(
                    Evaluator::new(&f).with_threads(t).eval(&op, &d).unwrap(),
                    seq
                );
            }
        }
    }

    #[test]
    fn structural_facts() {
        let f = functions();
        let facts = FactBase::structural(&f);
        assert!(facts.holds(PropertyKind::Independent, &at(3), Some(&at(0))));
        assert!(!facts.holds(PropertyKind::Independent, &at(0), Some(&at(2))));
        for fact in facts.iter() {
            let b = fact.subjects.1.as_ref();
            assert!(
                check_property(fact.kind, &fact.subjects.0, b, &lattice(), &f)
                    .unwrap()
                    .holds()
            );
        }
    }
}
