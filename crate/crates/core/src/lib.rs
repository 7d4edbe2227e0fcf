//! Cost-bounded active classification of hidden-model MDPs.
//!
//! A system is one of several known MDPs over a shared state and action
//! space. An agent observes the state, keeps a belief over which model is
//! active, and chooses actions so that within a step horizon and a cost
//! budget the belief in one model crosses its confidence threshold.
//!
//! * [`model`]: model families, beliefs, decision rules and budgets.
//! * [`exact`]: unfolding into a finite belief MDP and value iteration.
//! * [`ams`]: the sampling estimator for problems too large to unfold.
//! * [`sim`]: executing policies against a chosen true model.
//! * [`advise`]: executing a policy with observations supplied live.
//! * [`export`]: explicit-state files for external model checkers.
//! * [`models`]: built-in case studies and JSON model files.

pub mod advise;
pub mod ams;
pub mod error;
pub mod exact;
pub mod export;
pub mod model;
pub mod models;
pub mod policy;
pub mod rational;
pub mod sim;

pub use error::{Error, Result, Violation};
pub use model::{BeliefNode, BudgetSpec, Cost, DecisionSpec, ModelFamily, NodeKey, Problem};
pub use policy::{Policy, PolicyKind};
