//! The generic iteration loops: `gi` over single reduction functions and
//! `gico` over composition operators produced by a [`Strategy`].
//!
//! Both keep an ordered active set `G`. Each turn removes the generator of
//! the chosen operator from `G`, computes the update set from the domain
//! before and after the operator, and inserts it back.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::functions::{FunctionId, FunctionSet};
use crate::lattice::{Domain, VarDomain};
use crate::operators::{
    is_idempotent_operator, CompositionOperator, Evaluator, FactBase, OperatorError,
};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("strategy returned an operator with an empty generator")]
    EmptyGenerator,
    #[error("operator uses {0}, which is not active")]
    NotActive(FunctionId),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("strategy failed: {0}")]
    Strategy(String),
    #[error("after turn {turn}, {function} is inactive but not at a fixed-point")]
    InvariantViolated { turn: u64, function: FunctionId },
}

/// Ordered set of active function ids: FIFO order, no duplicates.
#[derive(Debug, Clone, Default)]
pub struct ActiveSet {
    order: VecDeque<FunctionId>,
    members: BTreeSet<FunctionId>,
}

impl ActiveSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids(ids: impl IntoIterator<Item = FunctionId>) -> Self {
        let mut set = Self::new();
        for id in ids {
            set.insert(id);
        }
        set
    }

    /// Appends `id` unless already present; returns whether it was added.
    pub fn insert(&mut self, id: FunctionId) -> bool {
        if self.members.insert(id) {
            self.order.push_back(id);
            true
        } else {
            false
        }
    }

    pub fn remove(&mut self, id: FunctionId) -> bool {
        if self.members.remove(&id) {
            self.order.retain(|x| *x != id);
            true
        } else {
            false
        }
    }

    pub fn remove_all(&mut self, ids: &BTreeSet<FunctionId>) {
        self.members.retain(|x| !ids.contains(x));
        self.order.retain(|x| !ids.contains(x));
    }

    pub fn contains(&self, id: FunctionId) -> bool {
        self.members.contains(&id)
    }

    pub fn front(&self) -> Option<FunctionId> {
        self.order.front().copied()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Ids in queue order.
    pub fn iter(&self) -> impl Iterator<Item = FunctionId> + '_ {
        self.order.iter().copied()
    }

    /// Ids in ascending order.
    pub fn sorted(&self) -> impl Iterator<Item = FunctionId> + '_ {
        self.members.iter().copied()
    }

    pub fn members(&self) -> &BTreeSet<FunctionId> {
        &self.members
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdatePolicy {
    /// Literal evaluation of the update conditions.
    Exact,
    /// Functions whose read variables changed.
    #[default]
    Dependency,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub atomic_applications: u64,
    pub operators_created: u64,
    pub inner_closure_passes: u64,
    pub update_insertions: u64,
}

impl std::fmt::Display for Stats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "stats: apps={} ops={} closure_passes={} updates={}",
            self.atomic_applications,
            self.operators_created,
            self.inner_closure_passes,
            self.update_insertions
        )
    }
}

/// One loop turn, for tracing.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub turn: u64,
    pub operator: String,
    pub changed: Vec<String>,
    pub active_before: usize,
    pub active_after: usize,
    pub inserted: Vec<String>,
}

impl std::fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "turn={} op={} changed=[{}] |G|={}->{} inserted=[{}]",
            self.turn,
            self.operator,
            self.changed.join(","),
            self.active_before,
            self.active_after,
            self.inserted.join(",")
        )
    }
}

#[derive(Debug, Clone)]
pub struct Outcome<S = f64> {
    pub domain: Domain<S>,
    pub stats: Stats,
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    pub update: UpdatePolicy,
    /// Threads available to `Par` nodes.
    pub threads: usize,
    /// Interval bound moves at or below this are not reported as changes.
    /// Zero disables the guard.
    pub min_progress: f64,
    pub trace: bool,
    /// Verify after every turn that each inactive function is at a
    /// fixed-point. Skipped when `min_progress > 0`.
    pub check_invariant: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            update: UpdatePolicy::Dependency,
            threads: 1,
            min_progress: 0.0,
            trace: false,
            check_invariant: false,
        }
    }
}

/// Read-only view handed to strategies.
pub struct StrategyContext<'a, S = f64> {
    pub functions: &'a FunctionSet<S>,
    pub active: &'a ActiveSet,
    pub domain: &'a Domain<S>,
    pub facts: &'a FactBase,
}

/// Builds the operator for each turn of `gico`.
pub trait Strategy<S: Scalar> {
    fn create(&mut self, ctx: &StrategyContext<'_, S>) -> Result<CompositionOperator, EngineError>;

    /// Called after the operator of the turn has been applied.
    fn observe(&mut self, _op: &CompositionOperator, _before: &Domain<S>, _after: &Domain<S>) {}
}

/// Selection rule for `gi`.
pub trait ChoosePolicy {
    fn choose(&mut self, active: &ActiveSet) -> FunctionId;
}

/// Oldest active function first.
#[derive(Debug, Clone, Copy, Default)]
pub struct Fifo;

impl ChoosePolicy for Fifo {
    fn choose(&mut self, active: &ActiveSet) -> FunctionId {
        active.front().expect("active set is not empty")
    }
}

/// Uniformly random active function, reproducible from a seed.
#[derive(Debug, Clone)]
pub struct RandomChoice {
    rng: ChaCha8Rng,
}

impl RandomChoice {
    pub fn new(seed: u64) -> Self {
        RandomChoice {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl ChoosePolicy for RandomChoice {
    fn choose(&mut self, active: &ActiveSet) -> FunctionId {
        let ids: Vec<FunctionId> = active.iter().collect();
        *ids.choose(&mut self.rng).expect("active set is not empty")
    }
}

/// Turns a choose policy into a strategy of atomic operators.
pub struct Atomic<C>(pub C);

impl<S: Scalar, C: ChoosePolicy> Strategy<S> for Atomic<C> {
    fn create(&mut self, ctx: &StrategyContext<'_, S>) -> Result<CompositionOperator, EngineError> {
        Ok(CompositionOperator::Atomic(self.0.choose(ctx.active)))
    }
}

pub struct Engine<'a, S = f64> {
    functions: &'a FunctionSet<S>,
    facts: FactBase,
    config: EngineConfig,
}

impl<'a, S: Scalar> Engine<'a, S> {
    pub fn new(functions: &'a FunctionSet<S>) -> Self {
        Engine {
            functions,
            facts: FactBase::new(),
            config: EngineConfig::default(),
        }
    }

    pub fn with_config(mut self, config: EngineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_facts(mut self, facts: FactBase) -> Self {
        self.facts = facts;
        self
    }

    pub fn facts(&self) -> &FactBase {
        &self.facts
    }

    pub fn gi<C: ChoosePolicy>(
        &self,
        d0: &Domain<S>,
        choose: C,
    ) -> Result<Outcome<S>, EngineError> {
        self.gico(d0, &mut Atomic(choose))
    }

    pub fn gico(
        &self,
        d0: &Domain<S>,
        strategy: &mut dyn Strategy<S>,
    ) -> Result<Outcome<S>, EngineError> {
        let mut active = ActiveSet::from_ids(self.functions.ids());
        let mut d = d0.clone();
        let mut stats = Stats::default();
        let mut trace = Vec::new();
        let evaluator = Evaluator::new(self.functions).with_threads(self.config.threads);
        while !active.is_empty() {
            let op = strategy.create(&StrategyContext {
                functions: self.functions,
                active: &active,
                domain: &d,
                facts: &self.facts,
            })?;
            let generator = op.generator();
            if generator.is_empty() {
                return Err(EngineError::EmptyGenerator);
            }
            if let Some(id) = generator.iter().find(|id| !active.contains(**id)) {
                return Err(EngineError::NotActive(*id));
            }
            let before = active.len();
            active.remove_all(&generator);
            let (after, counts) = evaluator.eval(&op, &d)?;
            stats.operators_created += 1;
            stats.atomic_applications += counts.applications;
            stats.inner_closure_passes += counts.closure_passes;

            let changed = self.changed(&d, &after);
            let update = self.update(&active, &op, &generator, &d, &after, &changed);
            let mut inserted = Vec::new();
            for id in update {
                if active.insert(id) {
                    inserted.push(id);
                }
            }
            stats.update_insertions += inserted.len() as u64;
            strategy.observe(&op, &d, &after);
            if self.config.trace {
                trace.push(TraceEvent {
                    turn: stats.operators_created,
                    operator: op.render(self.functions),
                    changed: changed.iter().map(|&v| d.vars()[v].clone()).collect(),
                    active_before: before,
                    active_after: active.len(),
                    inserted: inserted
                        .iter()
                        .map(|&id| self.functions.name_of(id))
                        .collect(),
                });
            }
            d = after;
            if self.config.check_invariant && self.config.min_progress <= 0.0 {
                if let Some(f) = self
                    .functions
                    .iter()
                    .find(|f| !active.contains(f.id()) && f.apply(&d) != d)
                {
                    return Err(EngineError::InvariantViolated {
                        turn: stats.operators_created,
                        function: f.id(),
                    });
                }
            }
        }
        Ok(Outcome {
            domain: d,
            stats,
            trace,
        })
    }

    /// Variables that changed by more than the progress threshold.
    fn changed(&self, before: &Domain<S>, after: &Domain<S>) -> Vec<usize> {
        if after.is_empty() && !before.is_empty() {
            return (0..before.len()).collect();
        }
        let eps = self.config.min_progress;
        before
            .changed_vars(after)
            .into_iter()
            .filter(|&v| match (before.get(v), after.get(v)) {
                (VarDomain::Interval(a), VarDomain::Interval(b)) if eps > 0.0 => {
                    (b.lo() - a.lo()).as_f64() > eps || (a.hi() - b.hi()).as_f64() > eps
                }
                _ => true,
            })
            .collect()
    }

    /// The operator's output is a fixed-point of each function in its
    /// generator, so those need not be re-inserted.
    fn fixes_generator(&self, op: &CompositionOperator) -> bool {
        match op {
            CompositionOperator::Atomic(id) => {
                self.functions
                    .get(*id)
                    .is_some_and(|f| f.known_idempotent())
                    || self
                        .facts
                        .holds(crate::operators::PropertyKind::Idempotent, op, None)
            }
            CompositionOperator::Gfp(_) => true,
            CompositionOperator::Seq(c) | CompositionOperator::Par(c) => {
                c.len() == 1 && self.fixes_generator(&c[0])
            }
        }
    }

    /// Ascending ids to insert into `active` (which already excludes the
    /// generator).
    fn update(
        &self,
        active: &ActiveSet,
        op: &CompositionOperator,
        generator: &BTreeSet<FunctionId>,
        d: &Domain<S>,
        after: &Domain<S>,
        changed: &[usize],
    ) -> Vec<FunctionId> {
        if changed.is_empty() || after == d {
            return Vec::new();
        }
        if after.is_empty() {
            // every function is at a fixed-point on the bottom element
            return Vec::new();
        }
        let inactive = self.functions.ids().filter(|id| !active.contains(*id));
        match self.config.update {
            UpdatePolicy::Dependency => {
                let skip_generator = self.fixes_generator(op);
                inactive
                    .filter(|id| !(skip_generator && generator.contains(id)))
                    .filter(|id| {
                        let f = self.functions.get(*id).expect("registered");
                        f.reads().iter().any(|v| changed.contains(v))
                    })
                    .collect()
            }
            UpdatePolicy::Exact => {
                let skip_c = is_idempotent_operator(op, &self.facts) || self.fixes_generator(op);
                inactive
                    .filter(|id| {
                        let f = self.functions.get(*id).expect("registered");
                        let moves_after = f.apply(after) != *after;
                        if !moves_after {
                            return false;
                        }
                        let up_a = f.apply(d) == *d;
                        let up_c = !skip_c && generator.contains(id);
                        up_a || up_c
                    })
                    .collect()
            }
        }
    }
}

/// `gi` with default configuration.
pub fn gi<S: Scalar, C: ChoosePolicy>(
    functions: &FunctionSet<S>,
    d0: &Domain<S>,
    choose: C,
) -> Outcome<S> {
    Engine::new(functions)
        .gi(d0, choose)
        .expect("atomic choices are always active")
}

/// `gico` with default configuration apart from the update policy.
pub fn gico<S: Scalar>(
    functions: &FunctionSet<S>,
    d0: &Domain<S>,
    strategy: &mut dyn Strategy<S>,
    update: UpdatePolicy,
) -> Result<Outcome<S>, EngineError> {
    Engine::new(functions)
        .with_config(EngineConfig {
            update,
            ..EngineConfig::default()
        })
        .gico(d0, strategy)
}
