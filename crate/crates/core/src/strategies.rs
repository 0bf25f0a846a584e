//! Operator factories for `gico`: priority classes, interval sequencing,
//! slow-cycle acceleration and parallel decoupling.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::{Atomic, EngineError, Fifo, Strategy, StrategyContext};
use crate::functions::{structurally_independent, FunctionId, FunctionKind, FunctionSet};
use crate::lattice::Domain;
use crate::operators::{CompositionOperator as Op, FactBase, PropertyKind};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("invalid strategy parameter: {0}")]
    Parameter(String),
    #[error("unknown strategy `{0}`")]
    Unknown(String),
}

impl From<StrategyError> for EngineError {
    fn from(e: StrategyError) -> Self {
        EngineError::Strategy(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Fifo,
    PriorityClosure,
    PrioritySeq,
    IntervalSeq,
    CycleAccel,
    ParallelPar,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Fifo,
        StrategyKind::PriorityClosure,
        StrategyKind::PrioritySeq,
        StrategyKind::IntervalSeq,
        StrategyKind::CycleAccel,
        StrategyKind::ParallelPar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Fifo => "fifo",
            StrategyKind::PriorityClosure => "priority-closure",
            StrategyKind::PrioritySeq => "priority-seq",
            StrategyKind::IntervalSeq => "interval-seq",
            StrategyKind::CycleAccel => "cycle",
            StrategyKind::ParallelPar => "parallel",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| StrategyError::Unknown(s.to_string()))
    }
}

/// Operator used inside each block of the parallel strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branch {
    Seq,
    #[default]
    Gfp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub threads: usize,
    /// Cycle window; `None` means twice the number of functions.
    pub window: Option<usize>,
    pub eps_ratio: f64,
    pub branch: Branch,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            threads: 1,
            window: None,
            eps_ratio: 0.05,
            branch: Branch::Gfp,
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.threads == 0 {
            return Err(StrategyError::Parameter("threads must be positive".into()));
        }
        if self.window == Some(0) {
            return Err(StrategyError::Parameter("window must be positive".into()));
        }
        if !(self.eps_ratio > 0.0 && self.eps_ratio < 1.0) {
            return Err(StrategyError::Parameter(format!(
                "eps-ratio must be in (0,1), got {}",
                self.eps_ratio
            )));
        }
        Ok(())
    }

    pub fn build<S: Scalar>(
        &self,
        functions: &FunctionSet<S>,
    ) -> Result<Box<dyn Strategy<S>>, StrategyError> {
        self.validate()?;
        Ok(match self.kind {
            StrategyKind::Fifo => Box::new(Atomic(Fifo)),
            StrategyKind::PriorityClosure => Box::new(PriorityClosure),
            StrategyKind::PrioritySeq => Box::new(PrioritySequence),
            StrategyKind::IntervalSeq => Box::new(IntervalSequence::detect(functions)),
            StrategyKind::CycleAccel => {
                let window = self.window.unwrap_or(2 * functions.len()).max(1);
                Box::new(CycleAccel::new(window, self.eps_ratio))
            }
            StrategyKind::ParallelPar => Box::new(Parallel {
                threads: self.threads,
                branch: self.branch,
            }),
        })
    }
}

fn require_nonempty(active: &[FunctionId]) -> Result<(), EngineError> {
    if active.is_empty() {
        return Err(EngineError::EmptyGenerator);
    }
    Ok(())
}

/// Closure of the active functions with the smallest priority value.
pub fn priority_closure<S: Scalar>(
    active: &[FunctionId],
    functions: &FunctionSet<S>,
) -> Result<Op, EngineError> {
    require_nonempty(active)?;
    let prio = |id: &FunctionId| functions.get(*id).map_or(0, |f| f.priority());
    let alpha = active.iter().map(prio).min().expect("nonempty");
    Ok(Op::gfp_of(
        active.iter().copied().filter(|id| prio(id) == alpha),
    )?)
}

/// One closure per priority class, the smallest value applied first
/// (listed last).
pub fn priority_sequence<S: Scalar>(
    active: &[FunctionId],
    functions: &FunctionSet<S>,
) -> Result<Op, EngineError> {
    require_nonempty(active)?;
    let mut classes: BTreeMap<i64, Vec<FunctionId>> = BTreeMap::new();
    for &id in active {
        let p = functions.get(id).map_or(0, |f| f.priority());
        classes.entry(p).or_default().push(id);
    }
    let parts = classes
        .into_values()
        .rev()
        .map(Op::gfp_of)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Op::seq(parts)?)
}

/// `Seq([Gfp(G−H), Gfp(H)])`: the closure of `H` is applied first.
pub fn interval_sequence(active: &[FunctionId], h: &[FunctionId]) -> Result<Op, EngineError> {
    require_nonempty(active)?;
    if h.is_empty() {
        return Err(EngineError::EmptyGenerator);
    }
    if let Some(id) = h.iter().find(|id| !active.contains(id)) {
        return Err(EngineError::NotActive(*id));
    }
    let rest: Vec<FunctionId> = active
        .iter()
        .copied()
        .filter(|id| !h.contains(id))
        .collect();
    let hop = Op::gfp_of(h.iter().copied())?;
    if rest.is_empty() {
        return Ok(hop);
    }
    Ok(Op::seq(vec![Op::gfp_of(rest)?, hop])?)
}

/// Drops every function that is weakly redundant with a retained one.
/// Returns the kept functions (renumbered) and the ids of the dropped ones.
pub fn prune_redundant<S: Scalar>(
    functions: &FunctionSet<S>,
    facts: &FactBase,
) -> (FunctionSet<S>, Vec<FunctionId>) {
    let mut kept: Vec<FunctionId> = Vec::new();
    let mut dropped = Vec::new();
    // later functions are tested against everything not yet dropped
    let all: Vec<FunctionId> = functions.ids().collect();
    for &id in &all {
        let me = Op::Atomic(id);
        let redundant = all
            .iter()
            .filter(|&&other| other != id && !dropped.contains(&other))
            .any(|&other| {
                facts.holds(PropertyKind::WeaklyRedundant, &me, Some(&Op::Atomic(other)))
            });
        if redundant {
            dropped.push(id);
        } else {
            kept.push(id);
        }
    }
    (functions.subset(&kept), dropped)
}

/// Weak-redundancy facts for box narrowing of a variable that occurs once
/// in its constraint, paired with an HC4 function on the same constraint.
pub fn single_occurrence_facts<S: Scalar>(functions: &FunctionSet<S>) -> FactBase {
    let mut facts = FactBase::new();
    for f in functions.iter() {
        let FunctionKind::BoxNarrow {
            constraint, target, ..
        } = f.kind()
        else {
            continue;
        };
        let crate::functions::ConstraintForm::Arith(a) = &constraint.form else {
            continue;
        };
        if a.occurrences(*target) != 1 {
            continue;
        }
        let partner = functions.iter().find(
            |g| matches!(g.kind(), FunctionKind::Hc4Revise { constraint: c } if std::sync::Arc::ptr_eq(c, constraint) || **c == **constraint),
        );
        if let Some(g) = partner {
            facts.assert(
                PropertyKind::WeaklyRedundant,
                Op::Atomic(f.id()),
                Some(Op::Atomic(g.id())),
            );
        }
    }
    facts
}

/// Structural independence plus single-occurrence redundancy facts.
pub fn default_facts<S: Scalar>(functions: &FunctionSet<S>) -> FactBase {
    let mut facts = FactBase::structural(functions);
    facts.extend(single_occurrence_facts(functions).iter().cloned());
    facts
}

/// Last `window` atomic applications with their reduction ratios.
#[derive(Debug, Clone)]
pub struct CycleHistory {
    window: usize,
    entries: VecDeque<(FunctionId, f64)>,
}

impl CycleHistory {
    pub fn new(window: usize) -> Self {
        CycleHistory {
            window: window.max(1),
            entries: VecDeque::with_capacity(window),
        }
    }

    pub fn push(&mut self, id: FunctionId, ratio: f64) {
        if self.entries.len() == self.window {
            self.entries.pop_front();
        }
        self.entries.push_back((id, ratio.clamp(0.0, 1.0)));
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.window
    }

    pub fn entries(&self) -> impl Iterator<Item = (FunctionId, f64)> + '_ {
        self.entries.iter().copied()
    }
}

/// `1 − measure(after)/measure(before)`, in `[0, 1]`.
pub fn reduction_ratio<S: Scalar>(before: &Domain<S>, after: &Domain<S>) -> f64 {
    ratio(before.measure(), after.measure())
}

fn ratio(before: f64, after: f64) -> f64 {
    if before == after {
        return 0.0;
    }
    if !(before.is_finite() && before > 0.0) {
        return 1.0;
    }
    (1.0 - after / before).clamp(0.0, 1.0)
}

/// The functions of the window when it is full, every ratio is below
/// `eps_ratio`, and every function in it occurs at least twice.
pub fn detect_cycle(history: &CycleHistory, eps_ratio: f64) -> Option<BTreeSet<FunctionId>> {
    if !history.is_full() {
        return None;
    }
    let mut counts: BTreeMap<FunctionId, usize> = BTreeMap::new();
    for (id, r) in history.entries() {
        if r >= eps_ratio {
            return None;
        }
        *counts.entry(id).or_default() += 1;
    }
    if counts.values().all(|&c| c >= 2) {
        Some(counts.into_keys().collect())
    } else {
        None
    }
}

/// Operator for a detected slow cycle `g_prime`: functions of the cycle
/// that are independent of every other active function are left alone;
/// of the rest, the best reducer of each variable is closed first and the
/// others are applied once afterwards.
pub fn cycle_accelerate<S: Scalar>(
    g_prime: &BTreeSet<FunctionId>,
    active: &[FunctionId],
    d: &Domain<S>,
    functions: &FunctionSet<S>,
    facts: &FactBase,
) -> Result<Op, EngineError> {
    if g_prime.is_empty() {
        return Err(EngineError::EmptyGenerator);
    }
    if let Some(id) = g_prime.iter().find(|id| !active.contains(id)) {
        return Err(EngineError::NotActive(*id));
    }
    let independent = |a: FunctionId, b: FunctionId| {
        facts.holds(
            PropertyKind::Independent,
            &Op::Atomic(a),
            Some(&Op::Atomic(b)),
        )
    };
    let phi: Vec<FunctionId> = g_prime
        .iter()
        .copied()
        .filter(|&g| !active.iter().all(|&o| o == g || independent(g, o)))
        .collect();
    if phi.is_empty() {
        return Ok(Op::gfp_of(g_prime.iter().copied())?);
    }
    let trial: Vec<(FunctionId, Domain<S>)> = phi
        .iter()
        .map(|&id| {
            (
                id,
                functions
                    .get(id)
                    .expect("active ids are registered")
                    .apply(d),
            )
        })
        .collect();
    let mut vars = BTreeSet::new();
    for &id in &phi {
        vars.extend(
            functions
                .get(id)
                .expect("registered")
                .writes()
                .iter()
                .copied(),
        );
    }
    let mut phi1 = BTreeSet::new();
    for v in vars {
        let before = d.get(v).size();
        let best = trial
            .iter()
            .filter(|(id, _)| {
                functions
                    .get(*id)
                    .expect("registered")
                    .writes()
                    .contains(&v)
            })
            .map(|(id, out)| {
                (
                    *id,
                    if out.is_empty() {
                        1.0
                    } else {
                        ratio(before, out.get(v).size())
                    },
                )
            })
            // strictly larger wins, so ties keep the lower id
            .fold(None::<(FunctionId, f64)>, |acc, (id, r)| match acc {
                Some((_, best)) if best >= r => acc,
                _ => Some((id, r)),
            });
        if let Some((id, r)) = best {
            if r > 0.0 {
                phi1.insert(id);
            }
        }
    }
    if phi1.is_empty() {
        return Ok(Op::gfp_of(g_prime.iter().copied())?);
    }
    let mut parts: Vec<Op> = phi
        .iter()
        .filter(|id| !phi1.contains(id))
        .map(|&id| Op::Atomic(id))
        .collect();
    let closure = Op::gfp_of(phi1)?;
    if parts.is_empty() {
        return Ok(closure);
    }
    parts.push(closure);
    Ok(Op::seq(parts)?)
}

/// Greedy partition of `active` into `k` blocks of sizes within one of each
/// other, keeping dependent functions together; `Par` of the per-block
/// operators.
pub fn parallel_partition<S: Scalar>(
    active: &[FunctionId],
    k: usize,
    branch: Branch,
    functions: &FunctionSet<S>,
) -> Result<Op, EngineError> {
    let n = active.len();
    if k == 0 || k > n {
        return Err(StrategyError::Parameter(format!("block count {k} outside 1..={n}")).into());
    }
    let mut ids = active.to_vec();
    ids.sort();
    let cap = |b: usize| n / k + usize::from(b < n % k);
    let mut blocks: Vec<Vec<FunctionId>> = vec![Vec::new(); k];
    for &id in &ids {
        let f = functions.get(id).ok_or(EngineError::NotActive(id))?;
        let dependents = |block: &Vec<FunctionId>| {
            block
                .iter()
                .filter(|&&o| !structurally_independent(f, functions.get(o).expect("registered")))
                .count()
        };
        let chosen = (0..k)
            .filter(|&b| blocks[b].len() < cap(b))
            .max_by(|&a, &b| {
                dependents(&blocks[a])
                    .cmp(&dependents(&blocks[b]))
                    .then(blocks[b].len().cmp(&blocks[a].len()))
                    .then(b.cmp(&a))
            })
            .expect("capacities sum to n");
        blocks[chosen].push(id);
    }
    let parts = blocks
        .into_iter()
        .map(|block| match branch {
            Branch::Gfp => Op::gfp_of(block),
            Branch::Seq => Op::seq(block.into_iter().map(Op::Atomic).collect()),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Op::par(parts)?)
}

fn active_ids<S>(ctx: &StrategyContext<'_, S>) -> Vec<FunctionId> {
    ctx.active.sorted().collect()
}

pub struct PriorityClosure;

impl<S: Scalar> Strategy<S> for PriorityClosure {
    fn create(&mut self, ctx: &StrategyContext<'_, S>) -> Result<Op, EngineError> {
        priority_closure(&active_ids(ctx), ctx.functions)
    }
}

pub struct PrioritySequence;

impl<S: Scalar> Strategy<S> for PrioritySequence {
    fn create(&mut self, ctx: &StrategyContext<'_, S>) -> Result<Op, EngineError> {
        priority_sequence(&active_ids(ctx), ctx.functions)
    }
}

/// Sequencing around the Gauss–Seidel functions of the set; plain closure
/// when none of them is active.
pub struct IntervalSequence {
    h: Vec<FunctionId>,
}

impl IntervalSequence {
    pub fn new(h: Vec<FunctionId>) -> Self {
        IntervalSequence { h }
    }

    pub fn detect<S: Scalar>(functions: &FunctionSet<S>) -> Self {
        let h = functions
            .iter()
            .filter(|f| matches!(f.kind(), FunctionKind::GaussSeidelSweep { .. }))
            .map(|f| f.id())
            .collect();
        IntervalSequence { h }
    }
}

impl<S: Scalar> Strategy<S> for IntervalSequence {
    fn create(&mut self, ctx: &StrategyContext<'_, S>) -> Result<Op, EngineError> {
        let active = active_ids(ctx);
        let h: Vec<FunctionId> = self
            .h
            .iter()
            .copied()
            .filter(|id| ctx.active.contains(*id))
            .collect();
        if h.is_empty() {
            return Ok(Op::gfp_of(active)?);
        }
        interval_sequence(&active, &h)
    }
}

/// FIFO atomic steps while watching for a slow cycle, then one accelerated
/// operator over the cycle.
pub struct CycleAccel {
    history: CycleHistory,
    eps_ratio: f64,
    accelerations: usize,
}

impl CycleAccel {
    pub fn new(window: usize, eps_ratio: f64) -> Self {
        CycleAccel {
            history: CycleHistory::new(window),
            eps_ratio,
            accelerations: 0,
        }
    }

    pub fn accelerations(&self) -> usize {
        self.accelerations
    }
}

impl<S: Scalar> Strategy<S> for CycleAccel {
    fn create(&mut self, ctx: &StrategyContext<'_, S>) -> Result<Op, EngineError> {
        if let Some(cycle) = detect_cycle(&self.history, self.eps_ratio) {
            let g_prime: BTreeSet<FunctionId> = cycle
                .into_iter()
                .filter(|id| ctx.active.contains(*id))
                .collect();
            if !g_prime.is_empty() {
                self.history.clear();
                self.accelerations += 1;
                return cycle_accelerate(
                    &g_prime,
                    &active_ids(ctx),
                    ctx.domain,
                    ctx.functions,
                    ctx.facts,
                );
            }
        }
        Ok(Op::Atomic(
            ctx.active.front().ok_or(EngineError::EmptyGenerator)?,
        ))
    }

    fn observe(&mut self, op: &Op, before: &Domain<S>, after: &Domain<S>) {
        match op {
            Op::Atomic(id) => self.history.push(*id, reduction_ratio(before, after)),
            _ => self.history.clear(),
        }
    }
}

pub struct Parallel {
    pub threads: usize,
    pub branch: Branch,
}

impl<S: Scalar> Strategy<S> for Parallel {
    fn create(&mut self, ctx: &StrategyContext<'_, S>) -> Result<Op, EngineError> {
        let active = active_ids(ctx);
        let k = self.threads.clamp(1, active.len().max(1));
        parallel_partition(&active, k, self.branch, ctx.functions)
    }
}
