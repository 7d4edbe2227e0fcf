//! Hidden-model MDP families and the belief arithmetic of the induced belief MDP.
//!
//! The true system is one of `L` candidate MDPs sharing states, actions, the
//! initial state and the cost function. The state is observed perfectly, so the
//! only hidden quantity is the model index and the belief is a distribution over
//! models. For a belief `b` at state `s` and action `a`:
//!
//! ```text
//! P(s' | s, b, a) = Σ_i b(i) T_i(s, a, s')
//! b'(i)           = T_i(s, a, s') b(i) / Σ_j T_j(s, a, s') b(j)
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Accumulated cost in integer units.
pub type Cost = u64;

/// Tolerance used when checking that probability vectors sum to one.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Beliefs are compared against thresholds with this much slack so that a
/// posterior which equals a threshold in exact arithmetic is not rejected
/// because of rounding in the last bit.
pub const DECISION_TOL: f64 = 1e-12;

/// Resolution of belief components inside node keys.
pub const BELIEF_QUANTUM: f64 = 1e-9;

/// Optional human-readable names. Empty vectors mean "use indices".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default)]
    pub states: Vec<String>,
    #[serde(default)]
    pub actions: Vec<String>,
    #[serde(default)]
    pub models: Vec<String>,
}

impl Labels {
    pub fn is_empty(&self) -> bool {
        self.states.is_empty() && self.actions.is_empty() && self.models.is_empty()
    }
}

/// `L` candidate MDPs over shared states, actions, initial state and costs,
/// together with the prior over which one is the true system.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFamily {
    num_states: usize,
    num_actions: usize,
    num_models: usize,
    initial_state: usize,
    // [model][state][action][next_state], row-major
    transitions: Vec<f64>,
    // [state][action]
    costs: Vec<i64>,
    initial_prior: Vec<f64>,
    labels: Labels,
}

impl ModelFamily {
    /// Builds a family from nested arrays indexed
    /// `transitions[model][state][action][next_state]` and `costs[state][action]`.
    ///
    /// Only the shape is checked here; numeric invariants are reported by
    /// [`ModelFamily::validate`].
    pub fn from_nested(
        initial_state: usize,
        transitions: &[Vec<Vec<Vec<f64>>>],
        costs: &[Vec<i64>],
        initial_prior: Vec<f64>,
    ) -> Result<Self> {
        let num_models = transitions.len();
        let num_states = costs.len();
        let num_actions = costs.first().map_or(0, Vec::len);
        let mut shape = Vec::new();
        if num_models == 0 {
            shape.push(Violation::EmptyDimension { what: "models" });
        }
        if num_states == 0 {
            shape.push(Violation::EmptyDimension { what: "states" });
        }
        if num_actions == 0 {
            shape.push(Violation::EmptyDimension { what: "actions" });
        }
        if initial_prior.len() != num_models {
            shape.push(Violation::ShapeMismatch {
                what: "initial_prior",
                expected: num_models,
                found: initial_prior.len(),
            });
        }
        for row in costs {
            if row.len() != num_actions {
                shape.push(Violation::ShapeMismatch {
                    what: "costs row",
                    expected: num_actions,
                    found: row.len(),
                });
            }
        }
        for per_model in transitions {
            if per_model.len() != num_states {
                shape.push(Violation::ShapeMismatch {
                    what: "transitions[model]",
                    expected: num_states,
                    found: per_model.len(),
                });
                continue;
            }
            for per_state in per_model {
                if per_state.len() != num_actions {
                    shape.push(Violation::ShapeMismatch {
                        what: "transitions[model][state]",
                        expected: num_actions,
                        found: per_state.len(),
                    });
                    continue;
                }
                for row in per_state {
                    if row.len() != num_states {
                        shape.push(Violation::ShapeMismatch {
                            what: "transitions[model][state][action]",
                            expected: num_states,
                            found: row.len(),
                        });
                    }
                }
            }
        }
        if !shape.is_empty() {
            return Err(Error::InvalidModel(shape));
        }
        let flat: Vec<f64> = transitions
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .copied()
            .collect();
        Ok(ModelFamily {
            num_states,
            num_actions,
            num_models,
            initial_state,
            transitions: flat,
            costs: costs.iter().flatten().copied().collect(),
            initial_prior,
            labels: Labels::default(),
        })
    }

    pub fn with_labels(mut self, labels: Labels) -> Self {
        self.labels = labels;
        self
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn initial_prior(&self) -> &[f64] {
        &self.initial_prior
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn state_label(&self, s: usize) -> String {
        self.labels
            .states
            .get(s)
            .cloned()
            .unwrap_or_else(|| s.to_string())
    }

    pub fn action_label(&self, a: usize) -> String {
        self.labels
            .actions
            .get(a)
            .cloned()
            .unwrap_or_else(|| a.to_string())
    }

    pub fn model_label(&self, i: usize) -> String {
        self.labels
            .models
            .get(i)
            .cloned()
            .unwrap_or_else(|| i.to_string())
    }

    /// Resolves a state given either by label or by index.
    pub fn parse_state(&self, text: &str) -> Option<usize> {
        let text = text.trim();
        if let Some(pos) = self.labels.states.iter().position(|l| l == text) {
            return Some(pos);
        }
        text.parse::<usize>().ok().filter(|&s| s < self.num_states)
    }

    /// Outgoing distribution `T_model(state, action, ·)`.
    pub fn row(&self, model: usize, state: usize, action: usize) -> &[f64] {
        let start =
            ((model * self.num_states + state) * self.num_actions + action) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn transition(&self, model: usize, state: usize, action: usize, next_state: usize) -> f64 {
        self.row(model, state, action)[next_state]
    }

    /// Raw cost entry; may be negative in an unvalidated family.
    pub fn raw_cost(&self, state: usize, action: usize) -> i64 {
        self.costs[state * self.num_actions + action]
    }

    /// Nested copy of the transition tensor, `[model][state][action][next_state]`.
    pub fn transitions_nested(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        (0..self.num_models)
            .map(|m| {
                (0..self.num_states)
                    .map(|s| {
                        (0..self.num_actions)
                            .map(|a| self.row(m, s, a).to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn costs_nested(&self) -> Vec<Vec<i64>> {
        self.costs
            .chunks(self.num_actions)
            .map(<[i64]>::to_vec)
            .collect()
    }

    /// Every violated invariant, with its location. Empty iff usable by the solvers.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.initial_state >= self.num_states {
            out.push(Violation::InitialStateOutOfRange {
                state: self.initial_state,
                num_states: self.num_states,
            });
        }
        for m in 0..self.num_models {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let row = self.row(m, s, a);
                    for (next_state, &value) in row.iter().enumerate() {
                        if !(0.0..=1.0).contains(&value) {
                            out.push(Violation::ProbabilityOutOfRange {
                                model: m,
                                state: s,
                                action: a,
                                next_state,
                                value,
                            });
                        }
                    }
                    let sum: f64 = row.iter().sum();
                    if !normalized(sum) {
                        out.push(Violation::RowNotStochastic {
                            model: m,
                            state: s,
                            action: a,
                            sum,
                        });
                    }
                }
            }
        }
        for (model, &value) in self.initial_prior.iter().enumerate() {
            if value.is_nan() || value < 0.0 {
                out.push(Violation::PriorEntryNegative { model, value });
            }
        }
        let sum: f64 = self.initial_prior.iter().sum();
        if !normalized(sum) {
            out.push(Violation::PriorNotNormalized { sum });
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let value = self.raw_cost(s, a);
                if value < 0 {
                    out.push(Violation::NegativeCost {
                        state: s,
                        action: a,
                        value,
                    });
                }
            }
        }
        out
    }

    /// `Ok(())` when [`ModelFamily::validate`] finds nothing.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s < self.num_states {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "state",
                index: s,
                len: self.num_states,
            })
        }
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a < self.num_actions {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                len: self.num_actions,
            })
        }
    }

    fn check_node(&self, node: &BeliefNode) -> Result<()> {
        self.check_state(node.state)?;
        if node.belief.len() != self.num_models {
            return Err(Error::IndexOutOfRange {
                what: "belief length",
                index: node.belief.len(),
                len: self.num_models,
            });
        }
        Ok(())
    }

    /// Cost of executing `action` in `state`.
    pub fn step_cost(&self, state: usize, action: usize) -> Result<Cost> {
        self.check_state(state)?;
        self.check_action(action)?;
        Ok(self.cost_unchecked(state, action))
    }

    pub(crate) fn cost_unchecked(&self, state: usize, action: usize) -> Cost {
        self.raw_cost(state, action).max(0) as Cost
    }

    /// Probability of observing `next_state` after `action` from `node`.
    pub fn transition_prob(
        &self,
        node: &BeliefNode,
        action: usize,
        next_state: usize,
    ) -> Result<f64> {
        self.check_node(node)?;
        self.check_action(action)?;
        self.check_state(next_state)?;
        Ok(self.mixture_prob(node.state, &node.belief, action, next_state))
    }

    fn mixture_prob(&self, state: usize, belief: &[f64], action: usize, next_state: usize) -> f64 {
        belief
            .iter()
            .enumerate()
            .map(|(m, &b)| b * self.transition(m, state, action, next_state))
            .sum()
    }

    /// Bayes posterior over models after observing `state -> next_state` under
    /// `action`. `None` means no model with positive belief can produce that
    /// successor.
    pub fn belief_update(
        &self,
        node: &BeliefNode,
        action: usize,
        next_state: usize,
    ) -> Result<Option<Vec<f64>>> {
        self.check_node(node)?;
        self.check_action(action)?;
        self.check_state(next_state)?;
        Ok(self
            .posterior(node.state, &node.belief, action, next_state)
            .map(|(_, b)| b))
    }

    /// Joint weights normalised; returns the normaliser (the successor
    /// probability) alongside the posterior.
    fn posterior(
        &self,
        state: usize,
        belief: &[f64],
        action: usize,
        next_state: usize,
    ) -> Option<(f64, Vec<f64>)> {
        let weights: Vec<f64> = belief
            .iter()
            .enumerate()
            .map(|(m, &b)| b * self.transition(m, state, action, next_state))
            .collect();
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return None;
        }
        Some((total, weights.into_iter().map(|w| w / total).collect()))
    }

    /// All successors of `node` under `action` with positive probability, in
    /// increasing next-state order.
    pub fn successors(&self, node: &BeliefNode, action: usize) -> Vec<Successor> {
        let cost = node.cost + self.cost_unchecked(node.state, action);
        (0..self.num_states)
            .filter_map(|s2| {
                self.posterior(node.state, &node.belief, action, s2)
                    .map(|(probability, belief)| Successor {
                        probability,
                        node: BeliefNode {
                            state: s2,
                            belief,
                            cost,
                        },
                    })
            })
            .collect()
    }
}

/// A successor belief node together with the probability of reaching it.
#[derive(Debug, Clone, PartialEq)]
pub struct Successor {
    pub probability: f64,
    pub node: BeliefNode,
}

/// State of the belief MDP: observed state, belief over models, accumulated cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefNode {
    pub state: usize,
    pub belief: Vec<f64>,
    pub cost: Cost,
}

impl BeliefNode {
    pub fn new(state: usize, belief: Vec<f64>, cost: Cost) -> Self {
        BeliefNode {
            state,
            belief,
            cost,
        }
    }

    /// `(ŝ, b̂, 0)`.
    pub fn root(family: &ModelFamily) -> Self {
        BeliefNode::new(family.initial_state, family.initial_prior.clone(), 0)
    }

    pub fn key(&self) -> NodeKey {
        NodeKey {
            state: self.state,
            cost: self.cost,
            belief: self.belief.iter().map(|&b| quantize(b)).collect(),
        }
    }
}

fn quantize(b: f64) -> i64 {
    (b / BELIEF_QUANTUM).round() as i64
}

/// Identity of a belief node: state, cost and belief rounded to [`BELIEF_QUANTUM`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeKey {
    pub state: usize,
    pub cost: Cost,
    pub belief: Vec<i64>,
}

/// Per-model confidence thresholds and the optional safe region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSpec {
    pub thresholds: Vec<f64>,
    /// Observed states admitted by the safe region. `None` means every state is safe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safe_states: Option<BTreeSet<usize>>,
}

impl DecisionSpec {
    pub fn new(thresholds: Vec<f64>) -> Self {
        DecisionSpec {
            thresholds,
            safe_states: None,
        }
    }

    pub fn with_safe_states(mut self, safe: impl IntoIterator<Item = usize>) -> Self {
        self.safe_states = Some(safe.into_iter().collect());
        self
    }

    pub fn reach_avoid(&self) -> bool {
        self.safe_states.is_some()
    }

    pub fn validate(&self, family: &ModelFamily) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.thresholds.len() != family.num_models() {
            out.push(Violation::ShapeMismatch {
                what: "thresholds",
                expected: family.num_models(),
                found: self.thresholds.len(),
            });
        }
        for (model, &value) in self.thresholds.iter().enumerate() {
            if !(value > 0.5 && value <= 1.0) {
                out.push(Violation::ThresholdOutOfRange { model, value });
            }
        }
        if let Some(safe) = &self.safe_states {
            for &state in safe {
                if state >= family.num_states() {
                    out.push(Violation::SafeStateOutOfRange {
                        state,
                        num_states: family.num_states(),
                    });
                }
            }
        }
        out
    }

    /// The model whose belief reaches its threshold, if any. With every
    /// threshold above 0.5 at most one model can qualify.
    pub fn decide(&self, node: &BeliefNode) -> Option<usize> {
        node.belief
            .iter()
            .zip(&self.thresholds)
            .position(|(&b, &t)| b >= t - DECISION_TOL)
    }

    pub fn is_safe(&self, node: &BeliefNode) -> bool {
        self.is_safe_state(node.state)
    }

    pub fn is_safe_state(&self, state: usize) -> bool {
        self.safe_states
            .as_ref()
            .is_none_or(|safe| safe.contains(&state))
    }
}

/// Step horizon `H` and cost bound `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub horizon: usize,
    pub cost_bound: Cost,
}

impl BudgetSpec {
    pub fn new(horizon: usize, cost_bound: Cost) -> Self {
        BudgetSpec {
            horizon,
            cost_bound,
        }
    }
}

/// A complete planning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub family: ModelFamily,
    pub spec: DecisionSpec,
    pub budget: BudgetSpec,
}

impl Problem {
    pub fn new(family: ModelFamily, spec: DecisionSpec, budget: BudgetSpec) -> Self {
        Problem {
            family,
            spec,
            budget,
        }
    }

    /// Family and decision-spec violations together.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = self.family.validate();
        v.extend(self.spec.validate(&self.family));
        v
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }
}

/// Sum within tolerance of 1; false for NaN.
fn normalized(sum: f64) -> bool {
    (sum - 1.0).abs() <= NORMALIZATION_TOL
}
