//! Constraint propagation as chaotic iteration of reduction functions over
//! a product semilattice, steered by composition operators (sequence,
//! closure, decoupling) and the strategies built from them.
//!
//! The core is generic over the interval bound type; the aliases below fix
//! it to `f64` or `f32`.

pub mod cli;
pub mod engine;
pub mod functions;
pub mod instance;
pub mod lattice;
pub mod operators;
pub mod oracle;
pub mod scalar;
pub mod strategies;

pub use engine::{gi, gico, Engine, EngineConfig, EngineError, Outcome, Stats, UpdatePolicy};
pub use functions::{FunctionId, FunctionSet, ReductionFunction};
pub use instance::{GenOptions, Instance};
pub use lattice::{Domain, FiniteSet, Interval, VarDomain};
pub use operators::{CompositionOperator, FactBase, PropertyKind};
pub use scalar::Scalar;
pub use strategies::{StrategyConfig, StrategyKind};

pub type Domain64 = Domain<f64>;
pub type Domain32 = Domain<f32>;
pub type Interval64 = Interval<f64>;
pub type Interval32 = Interval<f32>;
pub type VarDomain64 = VarDomain<f64>;
pub type FunctionSet64 = FunctionSet<f64>;
pub type FunctionSet32 = FunctionSet<f32>;
pub type Instance64 = Instance<f64>;
pub type Instance32 = Instance<f32>;
