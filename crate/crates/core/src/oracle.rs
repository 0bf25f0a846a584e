//! Brute-force references: round-robin greatest fixed-points, decomposition
//! checks, random problem generators and the exhaustive lemma suite.
//!
//! Everything here favours obviousness over speed.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Engine, EngineConfig, Fifo, Outcome, UpdatePolicy};
use crate::functions::{
    ArithConstraint, BinaryConstraint, CmpRel, Constraint, ConstraintForm, Expr, FunctionId,
    FunctionSet, NarrowingTable, ReductionFunction, RelOp,
};
use crate::instance::{ConstraintBody, ConstraintDecl, GenOptions, Instance, InstanceKind};
use crate::lattice::{enumerate_lattice, var_list, Domain, VarDomain};
use crate::operators::{
    check_property, eval, is_idempotent_operator, simplify_closure, CompositionOperator as Op,
    FactBase, PropertyCheck, PropertyKind,
};
use crate::scalar::Scalar;
use crate::strategies::{StrategyConfig, StrategyKind};

/// Applies every function in turn until a full pass changes nothing.
pub fn naive_gfp<S: Scalar>(functions: &FunctionSet<S>, d0: &Domain<S>) -> Domain<S> {
    let ids: Vec<FunctionId> = functions.ids().collect();
    naive_gfp_of(functions, &ids, d0)
}

/// [`naive_gfp`] giving up after `max_passes` full passes. Interval problems
/// with tangencies converge so slowly that they need a budget.
pub fn naive_gfp_within<S: Scalar>(
    functions: &FunctionSet<S>,
    d0: &Domain<S>,
    max_passes: usize,
) -> Option<Domain<S>> {
    let mut d = d0.clone();
    for _ in 0..max_passes {
        let before = d.clone();
        for f in functions.iter() {
            d = f.apply(&d);
        }
        if d == before || d.is_empty() {
            return Some(d);
        }
    }
    None
}

/// [`naive_gfp`] restricted to `ids`.
pub fn naive_gfp_of<S: Scalar>(
    functions: &FunctionSet<S>,
    ids: &[FunctionId],
    d0: &Domain<S>,
) -> Domain<S> {
    let mut d = d0.clone();
    loop {
        let mut changed = false;
        for &id in ids {
            let next = functions.get(id).expect("registered").apply(&d);
            if next != d {
                changed = true;
                d = next;
            }
        }
        if !changed || d.is_empty() {
            return d;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecompositionVerdict<S = f64> {
    HoldsOnScope {
        checked: usize,
    },
    Refuted {
        witness: Domain<S>,
    },
    /// The fine set is not larger than the coarse one.
    NotADecomposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionClaim<S = f64> {
    pub coarse: usize,
    pub fine: usize,
    pub verdict: DecompositionVerdict<S>,
}

impl<S> DecompositionClaim<S> {
    pub fn holds(&self) -> bool {
        matches!(self.verdict, DecompositionVerdict::HoldsOnScope { .. })
    }
}

/// Does `fine` have the same closure as `coarse` at every sample?
pub fn check_decomposition<S: Scalar>(
    coarse: &FunctionSet<S>,
    fine: &FunctionSet<S>,
    samples: &[Domain<S>],
) -> DecompositionClaim<S> {
    let verdict = if fine.len() <= coarse.len() {
        DecompositionVerdict::NotADecomposition
    } else {
        samples
            .iter()
            .find(|d| naive_gfp(coarse, d) != naive_gfp(fine, d))
            .map_or(
                DecompositionVerdict::HoldsOnScope {
                    checked: samples.len(),
                },
                |w| DecompositionVerdict::Refuted { witness: w.clone() },
            )
    };
    DecompositionClaim {
        coarse: coarse.len(),
        fine: fine.len(),
        verdict,
    }
}

/// Largest per-bound distance in ulps, `None` when the domains differ in
/// shape (emptiness, kinds or finite-set contents).
pub fn max_ulps<S: Scalar>(a: &Domain<S>, b: &Domain<S>) -> Option<u64> {
    if a.is_empty() || b.is_empty() {
        return (a.is_empty() == b.is_empty()).then_some(0);
    }
    let mut worst = 0;
    for (x, y) in a.components().iter().zip(b.components()) {
        match (x, y) {
            (VarDomain::Interval(p), VarDomain::Interval(q)) => {
                worst = worst
                    .max(S::ulps_between(p.lo(), q.lo()))
                    .max(S::ulps_between(p.hi(), q.hi()));
            }
            _ if x == y => {}
            _ => return None,
        }
    }
    Some(worst)
}

/// Exact equality for finite sets, `|Δ| ≤ tol` per interval bound.
pub fn domains_agree<S: Scalar>(a: &Domain<S>, b: &Domain<S>, tol: f64) -> bool {
    if a.is_empty() || b.is_empty() {
        return a.is_empty() == b.is_empty();
    }
    a.components()
        .iter()
        .zip(b.components())
        .all(|(x, y)| match (x, y) {
            (VarDomain::Interval(p), VarDomain::Interval(q)) => {
                let close = |u: S, v: S| u == v || (u.as_f64() - v.as_f64()).abs() <= tol;
                close(p.lo(), q.lo()) && close(p.hi(), q.hi())
            }
            _ => x == y,
        })
}

fn random_subset(rng: &mut impl Rng, universe: &[i64], p: f64) -> Vec<i64> {
    universe
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(p))
        .collect()
}

/// Random fd problem: 2..=`max_vars` variables over subsets of
/// `1..=universe`, 1..=`max_constraints` binary relations or tables.
pub fn random_fd_instance(
    rng: &mut impl Rng,
    max_vars: usize,
    universe: i64,
    max_constraints: usize,
) -> Instance {
    let n = rng.gen_range(2..=max_vars.max(2));
    let all: Vec<i64> = (1..=universe).collect();
    let vars = (0..n)
        .map(|i| {
            let mut vals = random_subset(rng, &all, 0.8);
            if vals.is_empty() {
                vals.push(*all.choose(rng).expect("nonempty universe"));
            }
            (format!("v{i}"), VarDomain::set(vals))
        })
        .collect();
    let ops = [
        RelOp::Lt,
        RelOp::Le,
        RelOp::Eq,
        RelOp::Ne,
        RelOp::Ge,
        RelOp::Gt,
    ];
    let m = rng.gen_range(1..=max_constraints.max(1));
    let constraints = (0..m)
        .map(|i| {
            let x = rng.gen_range(0..n);
            let mut y = rng.gen_range(0..n - 1);
            if y >= x {
                y += 1;
            }
            let body = if rng.gen_bool(0.7) {
                ConstraintBody::Rel {
                    x,
                    op: *ops.choose(rng).expect("nonempty"),
                    y,
                }
            } else {
                let allowed = all
                    .iter()
                    .flat_map(|&a| all.iter().map(move |&b| (a, b)))
                    .filter(|_| rng.gen_bool(0.4))
                    .collect();
                ConstraintBody::Table { x, y, allowed }
            };
            ConstraintDecl {
                id: format!("c{i}"),
                body,
                prio: Some(rng.gen_range(1..=3)),
            }
        })
        .collect();
    Instance {
        kind: InstanceKind::Fd,
        vars,
        constraints,
    }
}

fn random_bounds(rng: &mut impl Rng) -> VarDomain {
    let a = rng.gen_range(-10.0..10.0);
    let b = rng.gen_range(-10.0..10.0);
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    VarDomain::interval(lo, hi).expect("ordered finite bounds")
}

/// Random interval problem with one constraint in which every variable
/// occurs exactly once.
pub fn random_single_occurrence_instance(rng: &mut impl Rng) -> Instance {
    let n = rng.gen_range(2..=3);
    let vars: Vec<(String, VarDomain)> = (0..n)
        .map(|i| (format!("x{i}"), random_bounds(rng)))
        .collect();
    let mut leaves: Vec<Expr> = (0..n)
        .map(|v| {
            let leaf = Expr::Var(v);
            match rng.gen_range(0..4) {
                0 => leaf.sqr(),
                1 => Expr::Const(rng.gen_range(-3.0..3.0)).mul(leaf),
                _ => leaf,
            }
        })
        .collect();
    leaves.shuffle(rng);
    let mut e = leaves.pop().expect("two or more leaves");
    while let Some(next) = leaves.pop() {
        e = match rng.gen_range(0..3) {
            0 => e.add(next),
            1 => e.sub(next),
            _ => e.mul(next),
        };
    }
    let rel = [CmpRel::Eq, CmpRel::Le, CmpRel::Ge][rng.gen_range(0..3)];
    let rhs = Expr::Const(rng.gen_range(-5.0..5.0));
    Instance {
        kind: InstanceKind::Interval,
        vars,
        constraints: vec![ConstraintDecl {
            id: "c".into(),
            body: ConstraintBody::Expr(ArithConstraint::new(e, rel, rhs)),
            prio: None,
        }],
    }
}

/// Projection-form table function: for each combination of read values a
/// random allowed set per written variable.
pub fn random_table_function(
    rng: &mut impl Rng,
    name: String,
    reads: Vec<usize>,
    writes: Vec<usize>,
    universe: &[i64],
) -> ReductionFunction {
    let mut t = NarrowingTable::new(reads.clone(), writes.clone());
    let mut key = vec![0usize; reads.len()];
    loop {
        let k: Vec<i64> = key.iter().map(|&i| universe[i]).collect();
        let allowed = writes
            .iter()
            .map(|_| random_subset(rng, universe, 0.7).into_iter().collect())
            .collect();
        t.insert(k, allowed);
        let mut i = 0;
        loop {
            if i == key.len() {
                return ReductionFunction::table(name, t);
            }
            key[i] += 1;
            if key[i] < universe.len() {
                break;
            }
            key[i] = 0;
            i += 1;
        }
    }
}

/// Random operator tree of the given maximal depth over `leaves`.
pub fn random_tree(rng: &mut impl Rng, leaves: &[FunctionId], depth: usize) -> Op {
    if depth == 0 || rng.gen_bool(0.3) {
        return Op::Atomic(*leaves.choose(rng).expect("nonempty pool"));
    }
    let k = rng.gen_range(1..=3);
    let children = (0..k)
        .map(|_| random_tree(rng, leaves, depth - 1))
        .collect();
    match rng.gen_range(0..3) {
        0 => Op::Seq(children),
        1 => Op::Gfp(children),
        _ => Op::Par(children),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantedFault {
    /// A contracting but non-monotonic function among the tree leaves.
    NonMonotone,
    /// Two dependent functions with a false independence fact.
    DependentPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Values `1..=universe` for each of the two variables.
    pub universe: i64,
    pub trees: usize,
    pub plant: Option<PlantedFault>,
}

impl SuiteConfig {
    pub fn new(seed: u64) -> Self {
        SuiteConfig {
            seed,
            universe: 3,
            trees: 50,
            plant: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseResult {
    pub name: &'static str,
    pub scope: usize,
    pub witness: Option<String>,
}

impl ClauseResult {
    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }
}

impl fmt::Display for ClauseResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.witness {
            None => write!(f, "CLAUSE {} scope={} PASS", self.name, self.scope),
            Some(w) => write!(
                f,
                "CLAUSE {} scope={} FAIL witness={w}",
                self.name, self.scope
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteReport {
    pub clauses: Vec<ClauseResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(ClauseResult::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ClauseResult> {
        self.clauses.iter().filter(|c| !c.passed())
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Accumulates checks for one clause, keeping the first failure.
struct Clause {
    name: &'static str,
    scope: usize,
    witness: Option<String>,
}

impl Clause {
    fn new(name: &'static str) -> Self {
        Clause {
            name,
            scope: 0,
            witness: None,
        }
    }

    fn check(&mut self, ok: bool, witness: impl FnOnce() -> String) {
        self.scope += 1;
        if !ok && self.witness.is_none() {
            self.witness = Some(witness());
        }
    }

    fn done(self) -> ClauseResult {
        ClauseResult {
            name: self.name,
            scope: self.scope,
            witness: self.witness,
        }
    }
}

struct Fixture {
    functions: FunctionSet,
    lattice: Vec<Domain>,
    /// Functions reading and writing both variables.
    mixed: Vec<FunctionId>,
    x_only: Vec<FunctionId>,
    y_only: Vec<FunctionId>,
    planted: Option<FunctionId>,
}

impl Fixture {
    fn new(rng: &mut ChaCha8Rng, cfg: &SuiteConfig) -> Self {
        let universe: Vec<i64> = (1..=cfg.universe).collect();
        let vars = var_list(["x", "y"]);
        let lattice = enumerate_lattice(&vars, &[universe.clone(), universe.clone()], 1 << 20)
            .expect("small lattice");
        let mut functions = FunctionSet::new();
        let mut mixed = Vec::new();
        for i in 0..4 {
            let reads = match rng.gen_range(0..3) {
                0 => vec![0],
                1 => vec![1],
                _ => vec![0, 1],
            };
            let writes = match rng.gen_range(0..3) {
                0 => vec![0],
                1 => vec![1],
                _ => vec![0, 1],
            };
            mixed.push(functions.add(random_table_function(
                rng,
                format!("t{i}"),
                reads,
                writes,
                &universe,
            )));
        }
        let mut x_only = Vec::new();
        let mut y_only = Vec::new();
        for i in 0..2 {
            x_only.push(functions.add(random_table_function(
                rng,
                format!("x{i}"),
                vec![0],
                vec![0],
                &universe,
            )));
            y_only.push(functions.add(random_table_function(
                rng,
                format!("y{i}"),
                vec![1],
                vec![1],
                &universe,
            )));
        }
        let planted = (cfg.plant == Some(PlantedFault::NonMonotone)).then(|| {
            // shrinks a full x to {1}, leaves smaller ones alone
            let full = cfg.universe as usize;
            functions.add(ReductionFunction::custom(
                "nonmono",
                vec![0],
                vec![0],
                move |d: &Domain| {
                    let mut out = d.clone();
                    if let Some(s) = d.get(0).as_set() {
                        if s.len() == full {
                            out.narrow(0, &VarDomain::set([1]));
                        }
                    }
                    out
                },
            ))
        });
        Fixture {
            functions,
            lattice,
            mixed,
            x_only,
            y_only,
            planted,
        }
    }

    fn all_leaves(&self) -> Vec<FunctionId> {
        self.mixed
            .iter()
            .chain(&self.x_only)
            .chain(&self.y_only)
            .copied()
            .collect()
    }

    fn ev(&self, op: &Op, d: &Domain) -> Domain {
        eval(op, d, &self.functions).expect("trees are built from registered ids")
    }

    fn check(&self, kind: PropertyKind, a: &Op, b: Option<&Op>, facts: &mut FactBase) -> bool {
        match check_property(kind, a, b, &self.lattice, &self.functions).expect("valid subjects") {
            PropertyCheck::Holds(fact) => {
                facts.add(fact);
                true
            }
            PropertyCheck::Refuted { .. } => false,
        }
    }

    fn idempotence_counterexample(&self, op: &Op) -> Option<String> {
        self.lattice.iter().find_map(|d| {
            let once = self.ev(op, d);
            let twice = self.ev(op, &once);
            (once != twice)
                .then(|| format!("{} at {d}: {once} then {twice}", op.render(&self.functions)))
        })
    }
}

/// Exhaustively checks the operator lemmas and propositions on random
/// projection-form functions over two variables.
pub fn verify_lemma_suite(cfg: &SuiteConfig) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fx = Fixture::new(&mut rng, cfg);
    let leaves = fx.all_leaves();
    let mut trees: Vec<Op> = (0..cfg.trees)
        .map(|_| random_tree(&mut rng, &leaves, 3))
        .collect();
    if let Some(p) = fx.planted {
        trees.push(Op::Atomic(p));
        trees.push(Op::Seq(vec![Op::Atomic(p), Op::Atomic(leaves[0])]));
    }

    let mut contracting = Clause::new("lemma2.contracting");
    let mut monotone = Clause::new("lemma2.monotone");
    let mut lemma3 = Clause::new("lemma3.fixed-points");
    for t in &trees {
        let outs: Vec<Domain> = fx.lattice.iter().map(|d| fx.ev(t, d)).collect();
        let name = t.render(&fx.functions);
        for (d, out) in fx.lattice.iter().zip(&outs) {
            contracting.check(out.leq(d).unwrap_or(false), || {
                format!("{name} at {d} gives {out}")
            });
            let fixed = out == d;
            let all_fixed = t
                .generator()
                .iter()
                .all(|id| fx.functions.get(*id).expect("registered").apply(d) == *d);
            lemma3.check(fixed == all_fixed, || {
                format!("{name} at {d}: operator fixed={fixed}, generator fixed={all_fixed}")
            });
        }
        for (i, a) in fx.lattice.iter().enumerate() {
            for (j, b) in fx.lattice.iter().enumerate() {
                if a.leq(b).unwrap_or(false) {
                    monotone.check(outs[i].leq(&outs[j]).unwrap_or(false), || {
                        format!("{name} at {a} <= {b} gives {} vs {}", outs[i], outs[j])
                    });
                }
            }
        }
    }

    let mut lemma4 = Clause::new("lemma4.stabilization");
    for _ in 0..20 {
        let k = rng.gen_range(1..=3);
        let phi: Vec<Op> = (0..k).map(|_| random_tree(&mut rng, &leaves, 2)).collect();
        let cover: Vec<FunctionId> = phi
            .iter()
            .flat_map(|p| p.generator())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        for d in &fx.lattice {
            // round-robin over the operators until a full pass is stable
            let mut e = d.clone();
            loop {
                let before = e.clone();
                for p in &phi {
                    e = fx.ev(p, &e);
                }
                if e == before {
                    break;
                }
            }
            let gfp = naive_gfp_of(&fx.functions, &cover, d);
            lemma4.check(e == gfp, || format!("at {d}: iteration {e}, closure {gfp}"));
        }
    }

    let mut p1i = Clause::new("prop1.i");
    for t in trees.iter().take(cfg.trees) {
        let op = Op::Gfp(vec![t.clone()]);
        let bad = fx.idempotence_counterexample(&op);
        p1i.check(bad.is_none(), || bad.unwrap_or_default());
    }

    let gx = Op::gfp_of(fx.x_only.iter().copied()).expect("nonempty");
    let gy = Op::gfp_of(fx.y_only.iter().copied()).expect("nonempty");

    let mut p1ii = Clause::new("prop1.ii");
    let mut candidates = vec![
        Op::Seq(vec![gx.clone(), gy.clone()]),
        Op::Seq(vec![gy.clone(), gx.clone()]),
    ];
    for _ in 0..10 {
        let a = Op::Gfp(vec![random_tree(&mut rng, &leaves, 1)]);
        let b = Op::Gfp(vec![random_tree(&mut rng, &leaves, 1)]);
        candidates.push(Op::Seq(vec![a, b]));
    }
    for op in &candidates {
        let mut facts = FactBase::new();
        let c = op.children();
        let idem = c
            .iter()
            .all(|x| fx.check(PropertyKind::Idempotent, x, None, &mut facts));
        let semi = (0..c.len()).all(|i| {
            (0..i).all(|j| {
                fx.check(
                    PropertyKind::SemiCommutesWith,
                    &c[i],
                    Some(&c[j]),
                    &mut facts,
                )
            })
        });
        if idem && semi && is_idempotent_operator(op, &facts) {
            let bad = fx.idempotence_counterexample(op);
            p1ii.check(bad.is_none(), || bad.unwrap_or_default());
        }
    }

    let mut p1iii = Clause::new("prop1.iii");
    for _ in 0..10 {
        let cheap = Op::Atomic(*fx.mixed.choose(&mut rng).expect("nonempty"));
        let other = Op::Atomic(*leaves.choose(&mut rng).expect("nonempty"));
        let strong = Op::Gfp(vec![cheap.clone(), other]);
        let mid = Op::Gfp(vec![cheap.clone()]);
        for op in [
            Op::Seq(vec![strong.clone(), cheap.clone()]),
            Op::Seq(vec![strong, mid, cheap]),
        ] {
            let mut facts = FactBase::new();
            let c = op.children();
            let first = fx.check(PropertyKind::Idempotent, &c[0], None, &mut facts);
            let stronger = (1..c.len()).all(|i| {
                (0..i).any(|j| fx.check(PropertyKind::StrongerThan, &c[j], Some(&c[i]), &mut facts))
            });
            if first && stronger && is_idempotent_operator(&op, &facts) {
                let bad = fx.idempotence_counterexample(&op);
                p1iii.check(bad.is_none(), || bad.unwrap_or_default());
            }
        }
    }

    let mut p1iv = Clause::new("prop1.iv");
    let mut par_cases = vec![
        Op::Par(vec![gx.clone(), gy.clone()]),
        Op::Par(vec![
            Op::Gfp(vec![Op::Atomic(fx.x_only[0])]),
            Op::Gfp(vec![Op::Atomic(fx.y_only[1])]),
        ]),
    ];
    for _ in 0..6 {
        let a = Op::Gfp(vec![random_tree(&mut rng, &leaves, 1)]);
        let b = Op::Gfp(vec![random_tree(&mut rng, &leaves, 1)]);
        par_cases.push(Op::Par(vec![a, b]));
    }
    for op in &par_cases {
        let mut facts = FactBase::new();
        let c = op.children();
        let idem = c
            .iter()
            .all(|x| fx.check(PropertyKind::Idempotent, x, None, &mut facts));
        let indep = (0..c.len()).all(|i| {
            (0..i).all(|j| fx.check(PropertyKind::Independent, &c[i], Some(&c[j]), &mut facts))
        });
        if idem && indep && is_idempotent_operator(op, &facts) {
            let bad = fx.idempotence_counterexample(op);
            p1iv.check(bad.is_none(), || bad.unwrap_or_default());
        }
    }
    if cfg.plant == Some(PlantedFault::DependentPair) {
        let mut planted = fx.functions.clone();
        // f: x := x ∩ y, g: y := y ∩ {1,2}
        let eq = Arc::new(Constraint::new(
            "eq",
            ConstraintForm::Binary(BinaryConstraint::Relation {
                x: 0,
                op: RelOp::Eq,
                y: 1,
            }),
        ));
        let f = planted.add(ReductionFunction::revise("pair.f", eq, 0).expect("x is in scope"));
        let g = planted.add(ReductionFunction::constant(
            "pair.g",
            vec![(1, VarDomain::set([1, 2]))],
        ));
        let (f, g) = (Op::Atomic(f), Op::Atomic(g));
        let mut facts = FactBase::new();
        facts.assert(PropertyKind::Idempotent, f.clone(), None);
        facts.assert(PropertyKind::Idempotent, g.clone(), None);
        facts.assert(PropertyKind::Independent, f.clone(), Some(g.clone()));
        let op = Op::Par(vec![f, g]);
        if is_idempotent_operator(&op, &facts) {
            let bad = fx.lattice.iter().find_map(|d| {
                let once = eval(&op, d, &planted).expect("registered");
                let twice = eval(&op, &once, &planted).expect("registered");
                (once != twice)
                    .then(|| format!("{} at {d}: {once} then {twice}", op.render(&planted)))
            });
            p1iv.check(bad.is_none(), || bad.unwrap_or_default());
        }
    }

    let mut p21 = Clause::new("prop2.1");
    let mut p22 = Clause::new("prop2.2");
    for _ in 0..5 {
        let children: Vec<Op> = (0..rng.gen_range(1..=2))
            .map(|_| random_tree(&mut rng, &fx.x_only, 1))
            .collect();
        let varphi = random_tree(&mut rng, &fx.y_only, 1);
        let mut facts = FactBase::new();
        let indep = children
            .iter()
            .all(|c| fx.check(PropertyKind::Independent, &varphi, Some(c), &mut facts));
        if indep {
            let split =
                simplify_closure(children.clone(), varphi.clone(), &facts).expect("nonempty");
            let mut all = children.clone();
            all.push(varphi.clone());
            let full = Op::Gfp(all);
            for d in &fx.lattice {
                let (a, b) = (fx.ev(&split, d), fx.ev(&full, d));
                p21.check(a == b, || {
                    format!(
                        "{} vs {} at {d}: {a} vs {b}",
                        split.render(&fx.functions),
                        full.render(&fx.functions)
                    )
                });
            }
        }

        let children: Vec<Op> = (0..rng.gen_range(1..=3))
            .map(|_| random_tree(&mut rng, &leaves, 1))
            .collect();
        let twin = children.choose(&mut rng).expect("nonempty").clone();
        let varphi = Op::Seq(vec![twin.clone(), twin.clone()]);
        let mut facts = FactBase::new();
        if fx.check(
            PropertyKind::WeaklyRedundant,
            &varphi,
            Some(&twin),
            &mut facts,
        ) {
            let dropped =
                simplify_closure(children.clone(), varphi.clone(), &facts).expect("nonempty");
            let mut all = children.clone();
            all.push(varphi);
            let full = Op::Gfp(all);
            for d in &fx.lattice {
                let (a, b) = (fx.ev(&dropped, d), fx.ev(&full, d));
                p22.check(a == b, || format!("at {d}: {a} vs {b}"));
            }
        }
    }

    let mut p3 = Clause::new("prop3.decomposition");
    {
        let universe: Vec<i64> = (1..=cfg.universe).collect();
        let allowed = universe
            .iter()
            .flat_map(|&a| universe.iter().map(move |&b| (a, b)))
            .filter(|_| rng.gen_bool(0.5))
            .collect();
        let bc = BinaryConstraint::Table {
            x: 0,
            y: 1,
            allowed,
        };
        let shared = Arc::new(Constraint::new("tab", ConstraintForm::Binary(bc.clone())));
        let f0 = ReductionFunction::table(
            "ac",
            NarrowingTable::arc_consistency(&bc, &universe, &universe),
        );
        let rx = ReductionFunction::revise("tab.x", shared.clone(), 0).expect("in scope");
        let ry = ReductionFunction::revise("tab.y", shared, 1).expect("in scope");
        let coarse: FunctionSet = [f0.clone()].into_iter().collect();
        let fine: FunctionSet = [rx.clone(), ry.clone()].into_iter().collect();
        let claim = check_decomposition(&coarse, &fine, &fx.lattice);
        p3.check(claim.holds(), || format!("{:?}", claim.verdict));
        let others: Vec<ReductionFunction> = fx
            .mixed
            .iter()
            .map(|id| fx.functions.get(*id).expect("registered").clone())
            .collect();
        let f: FunctionSet = std::iter::once(f0).chain(others.iter().cloned()).collect();
        let h: FunctionSet = [rx, ry].into_iter().chain(others).collect();
        for d in &fx.lattice {
            let (a, b) = (naive_gfp(&f, d), naive_gfp(&h, d));
            p3.check(a == b, || format!("at {d}: F gives {a}, H gives {b}"));
        }
    }

    SuiteReport {
        clauses: [
            contracting,
            monotone,
            lemma3,
            lemma4,
            p1i,
            p1ii,
            p1iii,
            p1iv,
            p21,
            p22,
            p3,
        ]
        .into_iter()
        .map(Clause::done)
        .collect(),
    }
}

/// One strategy/update-policy run compared against the reference.
#[derive(Debug, Clone)]
pub struct EquivalenceResult {
    pub strategy: StrategyKind,
    pub update: UpdatePolicy,
    pub agrees: bool,
    pub outcome: Outcome,
}

/// Runs `instance` with `config` and `update`, using the structural and
/// single-occurrence facts of its function set.
pub fn run_instance(
    instance: &Instance,
    opts: GenOptions,
    config: &StrategyConfig,
    engine: EngineConfig,
) -> Result<Outcome, String> {
    let functions = instance.functions(opts).map_err(|e| e.to_string())?;
    let mut strategy = config.build(&functions).map_err(|e| e.to_string())?;
    facts_engine(&functions, engine)
        .gico(&instance.domain(), strategy.as_mut())
        .map_err(|e| e.to_string())
}

fn facts_engine(functions: &FunctionSet, config: EngineConfig) -> Engine<'_> {
    Engine::new(functions)
        .with_config(config)
        .with_facts(crate::strategies::default_facts(functions))
}

/// Every strategy under both update policies against the round-robin
/// reference. `tol` bounds interval differences.
pub fn strategy_equivalence(
    instance: &Instance,
    threads: usize,
    tol: f64,
) -> Result<(Domain, Vec<EquivalenceResult>), String> {
    let opts = GenOptions::default();
    let functions = instance.functions(opts).map_err(|e| e.to_string())?;
    let reference = naive_gfp(&functions, &instance.domain());
    let baseline = facts_engine(&functions, EngineConfig::default())
        .gi(&instance.domain(), Fifo)
        .map_err(|e| e.to_string())?;
    if !domains_agree(&baseline.domain, &reference, tol) {
        return Err(format!(
            "gi gives {} but the reference is {reference}",
            baseline.domain
        ));
    }
    let mut results = Vec::new();
    for kind in StrategyKind::ALL {
        for update in [UpdatePolicy::Dependency, UpdatePolicy::Exact] {
            let mut config = StrategyConfig::new(kind);
            config.threads = threads;
            let engine = EngineConfig {
                update,
                threads,
                ..EngineConfig::default()
            };
            let outcome = run_instance(instance, opts, &config, engine)?;
            results.push(EquivalenceResult {
                strategy: kind,
                update,
                agrees: domains_agree(&outcome.domain, &reference, tol),
                outcome,
            });
        }
    }
    Ok((reference, results))
}
