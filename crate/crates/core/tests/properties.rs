use std::collections::BTreeSet;
use std::sync::Arc;

use coprop::engine::{
    Engine, EngineConfig, EngineError, Fifo, RandomChoice, Strategy as EngineStrategy,
    StrategyContext, UpdatePolicy,
};
use coprop::functions::{
    ArithConstraint, BinaryConstraint, CmpRel, Constraint, ConstraintForm, Expr, FunctionKind,
    FunctionSet, ReductionFunction, RelOp,
};
use coprop::instance::{ConstraintBody, ConstraintDecl, GenOptions, Instance, InstanceKind};
use coprop::lattice::{enumerate_lattice, var_list, Domain, Interval, VarDomain};
use coprop::operators::{eval, CompositionOperator as Op};
use coprop::oracle::{
    naive_gfp, naive_gfp_within, random_fd_instance, random_single_occurrence_instance,
    random_table_function, random_tree,
};
use coprop::strategies::{default_facts, parallel_partition, Branch, StrategyConfig, StrategyKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ULP_TOL: u64 = 4;
const INTERVAL_TOL: f64 = 1e-9;
/// Tangent constraints converge sublinearly; such draws are discarded.
const PASS_BUDGET: usize = 2000;

/// Interval problem over three variables with integer bounds and integer
/// coefficients, built around a point that satisfies every constraint.
fn interval_instance(seed: u64) -> (Instance, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = (0..3).map(|_| f64::from(rng.gen_range(-3..=3))).collect();
    let vars = p
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let lo = v - f64::from(rng.gen_range(0..=4));
            let hi = v + f64::from(rng.gen_range(0..=4));
            (format!("x{i}"), VarDomain::interval(lo, hi).unwrap())
        })
        .collect();
    let term = |rng: &mut ChaCha8Rng| {
        let v = Expr::Var(rng.gen_range(0..3));
        match rng.gen_range(0..4) {
            0 => v.sqr(),
            1 => Expr::Const(f64::from(rng.gen_range(-3..=3))).mul(v),
            2 => v.mul(Expr::Var(rng.gen_range(0..3))),
            _ => v,
        }
    };
    let mut constraints = Vec::new();
    for i in 0..rng.gen_range(1..=3) {
        let mut lhs = term(&mut rng);
        for _ in 0..rng.gen_range(0..=2) {
            lhs = if rng.gen_bool(0.5) {
                lhs.add(term(&mut rng))
            } else {
                lhs.sub(term(&mut rng))
            };
        }
        let probe = ArithConstraint::new(lhs.clone(), CmpRel::Eq, Expr::Const(0.0));
        let at_p = Domain::with_vars(
            var_list(["x0", "x1", "x2"]),
            p.iter()
                .map(|&v| VarDomain::interval(v, v).unwrap())
                .collect(),
        )
        .unwrap();
        let value = probe.evaluate(&at_p, None).lo();
        let (rel, rhs) = match rng.gen_range(0..3) {
            0 => (CmpRel::Eq, value),
            1 => (CmpRel::Le, value + f64::from(rng.gen_range(0..=2))),
            _ => (CmpRel::Ge, value - f64::from(rng.gen_range(0..=2))),
        };
        constraints.push(ConstraintDecl {
            id: format!("c{i}"),
            body: ConstraintBody::Expr(ArithConstraint::new(lhs, rel, Expr::Const(rhs))),
            prio: None,
        });
    }
    (
        Instance {
            kind: InstanceKind::Interval,
            vars,
            constraints,
        },
        p,
    )
}

/// Random sub-box of `d` (same variables).
fn shrink(d: &Domain, rng: &mut ChaCha8Rng) -> Domain {
    let comps = d
        .components()
        .iter()
        .map(|c| match c.as_interval() {
            Some(i) => {
                let a = rng.gen_range(i.lo()..=i.hi());
                let b = rng.gen_range(i.lo()..=i.hi());
                VarDomain::interval(a.min(b), a.max(b)).unwrap()
            }
            None => c.clone(),
        })
        .collect();
    Domain::with_vars(d.vars().clone(), comps).unwrap()
}

fn contains_point(d: &Domain, p: &[f64]) -> bool {
    !d.is_empty()
        && d.components()
            .iter()
            .zip(p)
            .all(|(c, &v)| c.as_interval().is_some_and(|i| i.contains(v)))
}

fn leq(a: &Domain, b: &Domain) -> bool {
    a.leq(b).unwrap()
}

/// Wraps a strategy and checks engine contracts on every turn.
struct Watch {
    inner: Box<dyn EngineStrategy<f64>>,
    /// Domain, its measure and |G| at the start of each turn.
    turns: Vec<(Domain, f64, usize)>,
    states: Vec<Domain>,
    outside_generator: Option<String>,
}

impl Watch {
    fn new(inner: Box<dyn EngineStrategy<f64>>) -> Self {
        Watch {
            inner,
            turns: Vec::new(),
            states: Vec::new(),
            outside_generator: None,
        }
    }
}

impl EngineStrategy<f64> for Watch {
    fn create(&mut self, ctx: &StrategyContext<'_, f64>) -> Result<Op, EngineError> {
        let op = self.inner.create(ctx)?;
        if !op.generator().iter().all(|id| ctx.active.contains(*id)) {
            self.outside_generator = Some(op.render(ctx.functions));
        }
        self.turns
            .push((ctx.domain.clone(), ctx.domain.measure(), ctx.active.len()));
        Ok(op)
    }

    fn observe(&mut self, op: &Op, before: &Domain, after: &Domain) {
        self.states.push(after.clone());
        self.inner.observe(op, before, after);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interval_meet_never_widens(a in -50.0f64..50.0, w in 0.0f64..20.0, b in -50.0f64..50.0, v in 0.0f64..20.0) {
        let x = Interval::new(a, a + w).unwrap();
        let y = Interval::new(b, b + v).unwrap();
        if let Some(m) = x.intersect(&y) {
            prop_assert!(m.is_subset(&x) && m.is_subset(&y));
        }
    }

    #[test]
    fn interval_functions_are_contracting_monotone_and_sound(seed in any::<u64>()) {
        let (inst, p) = interval_instance(seed);
        let d = inst.domain();
        prop_assert!(contains_point(&d, &p));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let functions = inst.functions(GenOptions { prune_single_occurrence: false, ..GenOptions::default() }).unwrap();
        for f in functions.iter() {
            let out = f.apply(&d);
            prop_assert!(leq(&out, &d), "{} not contracting on {}", f.name(), d);
            prop_assert!(contains_point(&out, &p), "{} drops {:?}: {} -> {}", f.name(), p, d, out);
            for _ in 0..8 {
                let small = shrink(&d, &mut rng);
                let small_out = f.apply(&small);
                prop_assert!(leq(&small_out, &out), "{} not monotone: {} -> {} vs {} -> {}", f.name(), small, small_out, d, out);
            }
        }
        let fixed = naive_gfp_within(&functions, &d, PASS_BUDGET);
        prop_assume!(fixed.is_some());
        prop_assert!(contains_point(&fixed.unwrap(), &p));
    }

    #[test]
    fn revise_is_idempotent_per_arc(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_fd_instance(&mut rng, 4, 4, 6);
        let functions = inst.functions(GenOptions::default()).unwrap();
        let d = inst.domain();
        for f in functions.iter() {
            let once = f.apply(&d);
            prop_assert_eq!(f.apply(&once), once);
        }
    }

    #[test]
    fn box_matches_hc4_on_single_occurrence_targets(
        coefs in proptest::collection::vec((1i32..=4, any::<bool>()).prop_map(|(a, neg)| if neg { -a } else { a }), 2..=3),
        bounds in proptest::collection::vec((-6i32..=6, 0i32..=8), 3),
        rhs in -10i32..=10,
        rel in 0usize..3,
    ) {
        let n = coefs.len();
        let lhs = coefs
            .iter()
            .enumerate()
            .map(|(i, &a)| Expr::Const(f64::from(a)).mul(Expr::Var(i)))
            .reduce(Expr::add)
            .unwrap();
        let rel = [CmpRel::Eq, CmpRel::Le, CmpRel::Ge][rel];
        let ac = ArithConstraint::new(lhs, rel, Expr::Const(f64::from(rhs)));
        let c = Arc::new(Constraint::new("c", ConstraintForm::Arith(ac.clone())));
        let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let d = Domain::with_vars(
            var_list(names),
            bounds[..n].iter().map(|&(lo, w)| VarDomain::interval(f64::from(lo), f64::from(lo + w)).unwrap()).collect(),
        )
        .unwrap();
        // rounding happens at the magnitude of the largest term
        let scale = coefs
            .iter()
            .zip(&bounds)
            .map(|(&a, &(lo, w))| f64::from(a.abs()) * f64::from(lo.abs().max((lo + w).abs())))
            .sum::<f64>()
            + f64::from(rhs.abs());
        let tol = ULP_TOL as f64 * (scale.max(1.0).next_up() - scale.max(1.0));
        let hc4 = ReductionFunction::hc4("c.hc4", c.clone()).unwrap().apply(&d);
        for v in 0..n {
            prop_assert_eq!(ac.occurrences(v), 1);
            let boxed = ReductionFunction::box_narrow("c.box", c.clone(), v, f64::MIN_POSITIVE).unwrap().apply(&d);
            if hc4.is_empty() || boxed.is_empty() {
                prop_assert_eq!(hc4.is_empty(), boxed.is_empty(), "{} vs {}", hc4, boxed);
                continue;
            }
            let (h, b) = (hc4.get(v).as_interval().unwrap(), boxed.get(v).as_interval().unwrap());
            prop_assert!(
                (h.lo() - b.lo()).abs() <= tol && (h.hi() - b.hi()).abs() <= tol,
                "hc4 {} box {} on {} (tol {:e})", hc4, boxed, d, tol
            );
        }
    }

    #[test]
    fn box_and_hc4_both_keep_the_reachable_bounds(seed in any::<u64>()) {
        // with inexact coefficients the two differ by evaluation rounding only
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_single_occurrence_instance(&mut rng);
        let ConstraintBody::Expr(ac) = &inst.constraints[0].body else { unreachable!() };
        let c = Arc::new(Constraint::new("c", ConstraintForm::Arith(ac.clone())));
        let d = inst.domain();
        let hc4 = ReductionFunction::hc4("c.hc4", c.clone()).unwrap().apply(&d);
        for &v in ac.vars() {
            let boxed = ReductionFunction::box_narrow("c.box", c.clone(), v, f64::MIN_POSITIVE).unwrap().apply(&d);
            prop_assert_eq!(hc4.is_empty(), boxed.is_empty(), "{}: {} vs {}", inst, hc4, boxed);
            if hc4.is_empty() {
                continue;
            }
            let (h, b) = (hc4.get(v).as_interval().unwrap(), boxed.get(v).as_interval().unwrap());
            prop_assert!(h.intersect(b).is_some(), "{}: {} vs {}", inst, hc4, boxed);
            prop_assert!((h.lo() - b.lo()).abs() <= 1e-12 * (1.0 + h.lo().abs()) && (h.hi() - b.hi()).abs() <= 1e-12 * (1.0 + h.hi().abs()));
        }
    }

    #[test]
    fn gi_is_confluent_and_below_every_engine_state(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_fd_instance(&mut rng, 4, 4, 6);
        let functions = inst.functions(GenOptions::default()).unwrap();
        let d = inst.domain();
        let reference = naive_gfp(&functions, &d);
        prop_assert_eq!(naive_gfp(&functions, &reference), reference.clone());
        for _ in 0..4 {
            let out = Engine::new(&functions)
                .with_config(EngineConfig { check_invariant: true, ..EngineConfig::default() })
                .gi(&d, RandomChoice::new(rng.gen()))
                .unwrap();
            prop_assert_eq!(&out.domain, &reference);
        }
    }

    #[test]
    fn every_strategy_terminates_by_the_measure_and_respects_g(seed in any::<u64>(), interval in any::<bool>()) {
        let inst = if interval {
            interval_instance(seed).0
        } else {
            random_fd_instance(&mut ChaCha8Rng::seed_from_u64(seed), 4, 4, 6)
        };
        let functions = inst.functions(GenOptions::default()).unwrap();
        let d = inst.domain();
        let reference = naive_gfp_within(&functions, &d, PASS_BUDGET);
        prop_assume!(reference.is_some());
        let reference = reference.unwrap();
        for kind in StrategyKind::ALL {
            for update in [UpdatePolicy::Dependency, UpdatePolicy::Exact] {
                let mut watch = Watch::new(StrategyConfig::new(kind).build(&functions).unwrap());
                let out = Engine::new(&functions)
                    .with_config(EngineConfig { update, check_invariant: true, ..EngineConfig::default() })
                    .with_facts(default_facts(&functions))
                    .gico(&d, &mut watch)
                    .unwrap();
                prop_assert!(watch.outside_generator.is_none(), "{:?}: {:?}", kind, watch.outside_generator);
                // (measure, |G|) decreases lexicographically. The measure is an
                // f64 sum that can absorb a one-ulp change, so strictness is
                // checked on the domains themselves.
                for w in watch.turns.windows(2) {
                    let ((d0, m0, g0), (d1, m1, g1)) = (&w[0], &w[1]);
                    prop_assert!(m1 <= m0);
                    let shrunk = leq(d1, d0) && d1 != d0;
                    prop_assert!(shrunk || (d1 == d0 && g1 < g0), "{:?}/{:?}: {} |G|={} then {} |G|={}", kind, update, d0, g0, d1, g1);
                }
                for s in &watch.states {
                    prop_assert!(leq(&reference, s));
                }
                if interval {
                    prop_assert!(coprop::oracle::domains_agree(&out.domain, &reference, INTERVAL_TOL));
                } else {
                    prop_assert_eq!(&out.domain, &reference);
                }
            }
        }
    }

    #[test]
    fn instances_round_trip_through_text(seed in any::<u64>(), interval in any::<bool>()) {
        let inst = if interval {
            interval_instance(seed).0
        } else {
            random_fd_instance(&mut ChaCha8Rng::seed_from_u64(seed), 4, 4, 6)
        };
        let text = inst.to_string();
        let back = Instance::parse(&text).unwrap();
        prop_assert_eq!(&back, &inst);
        prop_assert_eq!(back.to_string(), text);
    }
}

fn table_fixture(seed: u64) -> (FunctionSet, Vec<Domain>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let universe = [1, 2, 3];
    let mut functions = FunctionSet::new();
    for i in 0..5 {
        let reads = if rng.gen_bool(0.5) {
            vec![0, 1]
        } else {
            vec![rng.gen_range(0..2)]
        };
        let writes = vec![rng.gen_range(0..2)];
        functions.add(random_table_function(
            &mut rng,
            format!("t{i}"),
            reads,
            writes,
            &universe,
        ));
    }
    let lattice = enumerate_lattice(
        &var_list(["x", "y"]),
        &[universe.to_vec(), universe.to_vec()],
        1 << 10,
    )
    .unwrap();
    (functions, lattice)
}

#[test]
fn gfp_is_a_common_fixed_point_equal_to_the_meet_iteration() {
    for seed in 0..10 {
        let (functions, lattice) = table_fixture(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<_> = functions.ids().collect();
        for _ in 0..10 {
            let children: Vec<Op> = (0..3).map(|_| random_tree(&mut rng, &ids, 2)).collect();
            let gfp = Op::gfp(children.clone()).unwrap();
            for d in &lattice {
                let out = eval(&gfp, d, &functions).unwrap();
                for c in &children {
                    assert_eq!(eval(c, &out, &functions).unwrap(), out);
                }
                // x ↦ ∩ φᵢ(x) iterated to stability
                let mut x = d.clone();
                loop {
                    let next = children
                        .iter()
                        .map(|c| eval(c, &x, &functions).unwrap())
                        .reduce(|a, b| a.meet(&b).unwrap())
                        .unwrap();
                    if next == x {
                        break;
                    }
                    x = next;
                }
                assert_eq!(out, x);
            }
        }
    }
}

#[test]
fn par_ignores_child_order() {
    for seed in 0..10 {
        let (functions, lattice) = table_fixture(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let ids: Vec<_> = functions.ids().collect();
        let children: Vec<Op> = (0..4).map(|_| random_tree(&mut rng, &ids, 2)).collect();
        let mut reversed = children.clone();
        reversed.reverse();
        let (a, b) = (Op::par(children).unwrap(), Op::par(reversed).unwrap());
        for d in &lattice {
            assert_eq!(
                eval(&a, d, &functions).unwrap(),
                eval(&b, d, &functions).unwrap()
            );
        }
    }
}

#[test]
fn partition_is_deterministic_and_independent_blocks_match_global_closure() {
    // x-block and y-block never touch each other's variables
    let rel = |id: &str, op: RelOp, x: usize, y: usize| {
        Arc::new(Constraint::<f64>::new(
            id,
            ConstraintForm::Binary(BinaryConstraint::Relation { x, op, y }),
        ))
    };
    let mut functions = FunctionSet::new();
    let a = rel("a", RelOp::Lt, 0, 1);
    let b = rel("b", RelOp::Ne, 2, 3);
    for (c, t) in [(&a, 0), (&a, 1), (&b, 2), (&b, 3)] {
        functions.add(ReductionFunction::revise(format!("{}.{t}", c.id), c.clone(), t).unwrap());
    }
    let vars = var_list(["x0", "x1", "x2", "x3"]);
    let u = vec![1, 2, 3];
    let lattice = enumerate_lattice(&vars, &[u.clone(), u.clone(), u.clone(), u], 1 << 20).unwrap();
    let ids: Vec<_> = functions.ids().collect();
    let global = Op::gfp_of(ids.iter().copied()).unwrap();
    let first = parallel_partition(&ids, 2, Branch::Gfp, &functions).unwrap();
    for _ in 0..5 {
        assert_eq!(
            parallel_partition(&ids, 2, Branch::Gfp, &functions).unwrap(),
            first
        );
    }
    let blocks: Vec<BTreeSet<_>> = first.children().iter().map(Op::generator).collect();
    assert_eq!(blocks.len(), 2);
    for f in &blocks[0] {
        for g in &blocks[1] {
            assert!(coprop::functions::structurally_independent(
                functions.get(*f).unwrap(),
                functions.get(*g).unwrap()
            ));
        }
    }
    for d in lattice.iter().step_by(7) {
        assert_eq!(
            eval(&first, d, &functions).unwrap(),
            eval(&global, d, &functions).unwrap()
        );
    }
}

#[test]
fn fd_lattice_chains_are_bounded_by_total_cardinality() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let inst = random_fd_instance(&mut rng, 4, 4, 6);
        let functions = inst.functions(GenOptions::default()).unwrap();
        let d = inst.domain();
        let out = Engine::new(&functions)
            .with_config(EngineConfig {
                trace: true,
                ..EngineConfig::default()
            })
            .gi(&d, Fifo)
            .unwrap();
        let strict = out.trace.iter().filter(|e| !e.changed.is_empty()).count();
        assert!(
            strict as f64 <= d.measure(),
            "{strict} strict steps from measure {}",
            d.measure()
        );
    }
}

#[test]
fn known_idempotent_kinds_are_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let inst = random_fd_instance(&mut rng, 4, 4, 6);
        let functions = inst.functions(GenOptions::default()).unwrap();
        for f in functions.iter().filter(|f| f.known_idempotent()) {
            assert!(matches!(f.kind(), FunctionKind::Revise { .. }));
            let d = inst.domain();
            let once = f.apply(&d);
            assert_eq!(f.apply(&once), once);
        }
    }
}
