//! Exact solver: cost-bounded unfolding of the belief MDP followed by a
//! finite-horizon dynamic program over remaining steps.
//!
//! Unfolding is a breadth-first expansion from `(ŝ, b̂, 0)`. An action whose
//! cost would push the accumulated cost over `D` is pruned at that node, goal
//! nodes are terminal, and in reach-avoid mode unsafe successors are recorded
//! but never expanded. Nodes are shared across layers by [`NodeKey`], so a node
//! is expanded once, at the first depth it is seen.
//!
//! Values are indexed by remaining steps `k`:
//!
//! ```text
//! V(q, k) = 1                                     q goal
//! V(q, k) = 0                                     q unsafe, or k = 0
//! V(q, k) = max_a Σ_q' T(q, a, q') V(q', k - 1)   otherwise
//! ```

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{BeliefNode, BudgetSpec, Cost, NodeKey, Problem};
use crate::policy::{Policy, PolicyKind, PolicyMetadata};

pub const DEFAULT_NODE_BUDGET: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Decision reached for the given model.
    Goal(usize),
    Unsafe,
    Interior,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Goal(_) => "goal",
            NodeKind::Unsafe => "unsafe",
            NodeKind::Interior => "interior",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedNode {
    pub node: BeliefNode,
    pub kind: NodeKind,
    pub depth_first_seen: usize,
}

/// Outgoing edges of one `(node, action)` pair. `None` marks an action pruned
/// because its cost would exceed the bound.
pub type ActionEdges = Option<Vec<(usize, f64)>>;

/// Finite layered belief MDP. Node 0 is the root.
#[derive(Debug, Clone)]
pub struct UnfoldedMdp {
    nodes: Vec<UnfoldedNode>,
    index: HashMap<NodeKey, usize>,
    // empty for nodes that were never expanded
    edges: Vec<Vec<ActionEdges>>,
    num_actions: usize,
    budget: BudgetSpec,
}

impl UnfoldedMdp {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[UnfoldedNode] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &UnfoldedNode {
        &self.nodes[idx]
    }

    pub fn lookup(&self, key: &NodeKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn budget(&self) -> BudgetSpec {
        self.budget
    }

    pub fn is_expanded(&self, idx: usize) -> bool {
        !self.edges[idx].is_empty()
    }

    /// Edges of `(idx, action)`; `None` if the node was not expanded or the
    /// action was pruned for cost.
    pub fn edges(&self, idx: usize, action: usize) -> Option<&[(usize, f64)]> {
        self.edges[idx].get(action)?.as_deref()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.iter().flatten().flatten().map(Vec::len).sum()
    }

    pub fn num_goal(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Goal(_)))
            .count()
    }

    /// Assembles an MDP from raw parts, e.g. when importing explicit files.
    /// Node 0 must be the root.
    pub fn from_parts(
        nodes: Vec<UnfoldedNode>,
        edges: Vec<Vec<ActionEdges>>,
        num_actions: usize,
        budget: BudgetSpec,
    ) -> Result<Self> {
        if nodes.is_empty() || edges.len() != nodes.len() {
            return Err(Error::Config(format!(
                "{} nodes but {} edge lists",
                nodes.len(),
                edges.len()
            )));
        }
        for &(target, _) in edges.iter().flatten().flatten().flatten() {
            if target >= nodes.len() {
                return Err(Error::IndexOutOfRange {
                    what: "edge target",
                    index: target,
                    len: nodes.len(),
                });
            }
        }
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.node.key(), i))
            .collect();
        Ok(UnfoldedMdp {
            nodes,
            index,
            edges,
            num_actions,
            budget,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UnfoldOptions {
    pub node_budget: usize,
}

impl Default for UnfoldOptions {
    fn default() -> Self {
        UnfoldOptions {
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

fn classify(problem: &Problem, node: &BeliefNode) -> NodeKind {
    if !problem.spec.is_safe(node) {
        NodeKind::Unsafe
    } else if let Some(i) = problem.spec.decide(node) {
        NodeKind::Goal(i)
    } else {
        NodeKind::Interior
    }
}

/// Breadth-first cost-bounded unfolding of the belief MDP.
pub fn unfold(problem: &Problem, options: UnfoldOptions) -> Result<UnfoldedMdp> {
    problem.ensure_valid()?;
    let family = &problem.family;
    let budget = problem.budget;
    let num_actions = family.num_actions();

    let root = BeliefNode::root(family);
    let root_kind = classify(problem, &root);
    let mut index = HashMap::new();
    index.insert(root.key(), 0);
    let mut nodes = vec![UnfoldedNode {
        node: root,
        kind: root_kind,
        depth_first_seen: 0,
    }];
    let mut edges: Vec<Vec<ActionEdges>> = vec![Vec::new()];

    let mut current = if root_kind == NodeKind::Interior {
        vec![0]
    } else {
        Vec::new()
    };
    let mut depth = 0;
    while depth < budget.horizon && !current.is_empty() {
        let mut next = Vec::new();
        for &q in &current {
            let node = nodes[q].node.clone();
            let mut per_action = Vec::with_capacity(num_actions);
            for a in 0..num_actions {
                let cost = node.cost + family.cost_unchecked(node.state, a);
                if cost > budget.cost_bound {
                    per_action.push(None);
                    continue;
                }
                let mut out = Vec::new();
                for succ in family.successors(&node, a) {
                    let key = succ.node.key();
                    let idx = match index.get(&key) {
                        Some(&idx) => idx,
                        None => {
                            let idx = nodes.len();
                            if idx >= options.node_budget {
                                return Err(Error::NodeBudgetExceeded {
                                    limit: options.node_budget,
                                });
                            }
                            let kind = classify(problem, &succ.node);
                            index.insert(key, idx);
                            nodes.push(UnfoldedNode {
                                node: succ.node,
                                kind,
                                depth_first_seen: depth + 1,
                            });
                            edges.push(Vec::new());
                            if kind == NodeKind::Interior {
                                next.push(idx);
                            }
                            idx
                        }
                    };
                    out.push((idx, succ.probability));
                }
                per_action.push(Some(out));
            }
            edges[q] = per_action;
        }
        current = next;
        depth += 1;
    }

    Ok(UnfoldedMdp {
        nodes,
        index,
        edges,
        num_actions,
        budget,
    })
}

/// `values[node][k]` for remaining steps `k` up to `H - depth_first_seen`.
#[derive(Debug, Clone)]
pub struct ValueTable {
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn value(&self, node: usize, remaining: usize) -> Option<f64> {
        self.values.get(node)?.get(remaining).copied()
    }

    pub fn node_values(&self, node: usize) -> &[f64] {
        &self.values[node]
    }

    pub fn root_value(&self) -> f64 {
        *self.values[0].last().expect("root has at least k = 0")
    }
}

fn action_value(edges: &[(usize, f64)], values: &[Vec<f64>], k: usize) -> f64 {
    edges
        .iter()
        .map(|&(t, p)| {
            // A successor first seen at depth d+1 always has entries up to H-d-1.
            p * values[t].get(k).copied().unwrap_or(0.0)
        })
        .sum()
}

/// Finite-horizon dynamic program over the unfolded MDP.
pub fn value_iterate(mdp: &UnfoldedMdp, budget: &BudgetSpec) -> ValueTable {
    let horizon = budget.horizon;
    let mut values: Vec<Vec<f64>> = mdp
        .nodes
        .iter()
        .map(|n| Vec::with_capacity(horizon.saturating_sub(n.depth_first_seen) + 1))
        .collect();
    for k in 0..=horizon {
        for q in 0..mdp.nodes.len() {
            let node = &mdp.nodes[q];
            if node.depth_first_seen + k > horizon {
                continue;
            }
            let v = match node.kind {
                NodeKind::Goal(_) => 1.0,
                NodeKind::Unsafe => 0.0,
                NodeKind::Interior if k == 0 => 0.0,
                NodeKind::Interior => mdp.edges[q]
                    .iter()
                    .flatten()
                    .map(|e| action_value(e, &values, k - 1))
                    .fold(0.0, f64::max),
            };
            values[q].push(v);
        }
    }
    ValueTable { values }
}

/// Greedy action with respect to `table` at node `q` with `remaining` steps,
/// among actions that keep the cost within the bound. Ties go to the lowest
/// action index.
pub fn best_action(
    mdp: &UnfoldedMdp,
    table: &ValueTable,
    q: usize,
    remaining: usize,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (a, e) in mdp.edges[q].iter().enumerate() {
        let Some(e) = e else { continue };
        let v = action_value(e, &table.values, remaining - 1);
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((a, v));
        }
    }
    best
}

/// Sets of nodes reachable at each step `0..=H` from the root, passing only
/// through interior nodes.
pub fn reachable_layers(mdp: &UnfoldedMdp) -> Vec<Vec<usize>> {
    let horizon = mdp.budget.horizon;
    let mut layers = vec![vec![0]];
    let mut seen = vec![usize::MAX; mdp.nodes.len()];
    seen[0] = 0;
    for step in 1..=horizon {
        let mut layer = Vec::new();
        for &q in &layers[step - 1] {
            if mdp.nodes[q].kind != NodeKind::Interior {
                continue;
            }
            for &(t, _) in mdp.edges[q].iter().flatten().flatten() {
                if seen[t] != step {
                    seen[t] = step;
                    layer.push(t);
                }
            }
        }
        layers.push(layer);
    }
    layers
}

/// Optimal action for every interior node reachable at each step `i < H`.
pub fn extract_policy(mdp: &UnfoldedMdp, table: &ValueTable, budget: &BudgetSpec) -> Policy {
    let root_probability = table.root_value();
    let mut policy = Policy::new(
        PolicyKind::Exact,
        budget.horizon,
        PolicyMetadata {
            root_probability,
            params: [
                ("method".to_string(), "exact".to_string()),
                ("horizon".to_string(), budget.horizon.to_string()),
                ("cost_bound".to_string(), budget.cost_bound.to_string()),
                ("nodes".to_string(), mdp.len().to_string()),
            ]
            .into_iter()
            .collect(),
        },
    );
    for (step, layer) in reachable_layers(mdp)
        .iter()
        .enumerate()
        .take(budget.horizon)
    {
        for &q in layer {
            if mdp.nodes[q].kind != NodeKind::Interior {
                continue;
            }
            if let Some((a, _)) = best_action(mdp, table, q, budget.horizon - step) {
                policy.insert(step, mdp.nodes[q].node.key(), a);
            }
        }
    }
    policy
}

#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub probability: f64,
    pub policy: Policy,
    pub mdp: UnfoldedMdp,
    pub values: ValueTable,
}

/// Maximal probability of reaching a decision within `H` steps and cost `D`
/// (while staying safe, when a safe region is given), with an optimal policy.
pub fn solve_exact(problem: &Problem, options: UnfoldOptions) -> Result<ExactSolution> {
    let mdp = unfold(problem, options)?;
    let values = value_iterate(&mdp, &problem.budget);
    let policy = extract_policy(&mdp, &values, &problem.budget);
    Ok(ExactSolution {
        probability: values.root_value(),
        policy,
        mdp,
        values,
    })
}

/// Highest cost carried by any node.
pub fn max_node_cost(mdp: &UnfoldedMdp) -> Cost {
    mdp.nodes.iter().map(|n| n.node.cost).max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::medical::{builtin_medical, medical_safe_states};

    fn medical(h: usize) -> Problem {
        let mut p = builtin_medical();
        p.budget = BudgetSpec::new(h, 10);
        p
    }

    #[test]
    fn one_step_unfolding() {
        let p = medical(1);
        let mdp = unfold(&p, UnfoldOptions::default()).unwrap();
        assert_eq!(mdp.len(), 7);
        assert_eq!(mdp.num_edges(), 6);
        assert_eq!(mdp.num_goal(), 1);
        let goal = mdp
            .nodes()
            .iter()
            .find(|n| matches!(n.kind, NodeKind::Goal(_)))
            .unwrap();
        assert_eq!(goal.kind, NodeKind::Goal(0));
        assert_eq!(goal.node.state, 1);
        assert_eq!(goal.node.cost, 5);
        assert!((goal.node.belief[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn one_step_value_and_policy() {
        let p = medical(1);
        let sol = solve_exact(&p, UnfoldOptions::default()).unwrap();
        assert!((sol.probability - 0.25).abs() < 1e-12);
        let root_key = sol.mdp.node(0).node.key();
        assert_eq!(sol.policy.action(0, &root_key), Some(1));
        assert_eq!(sol.policy.len(), 1);
    }

    #[test]
    fn zero_horizon() {
        let p = medical(0);
        let sol = solve_exact(&p, UnfoldOptions::default()).unwrap();
        assert_eq!(sol.mdp.len(), 1);
        assert_eq!(sol.mdp.num_edges(), 0);
        assert_eq!(sol.probability, 0.0);
        assert!(sol.policy.is_empty());
    }

    #[test]
    fn decided_root_is_terminal() {
        let mut p = medical(3);
        let t = p.family.transitions_nested();
        p.family =
            crate::model::ModelFamily::from_nested(0, &t, &p.family.costs_nested(), vec![0.9, 0.1])
                .unwrap()
                .with_labels(p.family.labels().clone());
        let sol = solve_exact(&p, UnfoldOptions::default()).unwrap();
        assert_eq!(sol.mdp.len(), 1);
        assert_eq!(sol.mdp.node(0).kind, NodeKind::Goal(0));
        assert_eq!(sol.probability, 1.0);
        assert!(sol.policy.is_empty());
    }

    #[test]
    fn base_cases_of_value_table() {
        let p = medical(3);
        let sol = solve_exact(&p, UnfoldOptions::default()).unwrap();
        for (q, n) in sol.mdp.nodes().iter().enumerate() {
            let vals = sol.values.node_values(q);
            match n.kind {
                NodeKind::Goal(_) => assert!(vals.iter().all(|&v| v == 1.0)),
                NodeKind::Interior => assert_eq!(vals[0], 0.0),
                NodeKind::Unsafe => unreachable!(),
            }
            assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-15));
        }
    }

    #[test]
    fn zero_cost_bound_uses_only_free_action() {
        let mut p = medical(2);
        p.budget.cost_bound = 0;
        let sol = solve_exact(&p, UnfoldOptions::default()).unwrap();
        // From s1 only a3 is free; from s2 and s3 likewise only a3.
        for q in 0..sol.mdp.len() {
            if sol.mdp.is_expanded(q) {
                assert!(sol.mdp.edges(q, 0).is_none());
                assert!(sol.mdp.edges(q, 1).is_none());
                assert!(sol.mdp.edges(q, 2).is_some());
            }
        }
        assert_eq!(max_node_cost(&sol.mdp), 0);
        // a3 then a3: hand enumeration over (s1 -> s1|s2 -> ...) with λ=(0.8,0.7).
        let expected = hand_a3_a3();
        assert!(
            (sol.probability - expected).abs() < 1e-12,
            "{} vs {expected}",
            sol.probability
        );
    }

    // Two observe-only steps from s1 with prior (0.5, 0.5), thresholds (0.8, 0.7).
    fn hand_a3_a3() -> f64 {
        // T1(a3) rows: s1 (0.5,0.5,0), s2 (0.1,0.6,0.3); T2(a3): s1 (0.3,0.7,0), s2 (0.1,0.3,0.6)
        let t1 = [[0.5, 0.5, 0.0], [0.1, 0.6, 0.3]];
        let t2 = [[0.3, 0.7, 0.0], [0.1, 0.3, 0.6]];
        let mut total = 0.0;
        for s1 in 0..2 {
            let w1 = 0.5 * t1[0][s1];
            let w2 = 0.5 * t2[0][s1];
            let b1 = w1 / (w1 + w2);
            if b1 >= 0.8 || 1.0 - b1 >= 0.7 {
                total += w1 + w2;
                continue;
            }
            for s2 in 0..3 {
                let v1 = w1 * t1[s1][s2];
                let v2 = w2 * t2[s1][s2];
                if v1 + v2 == 0.0 {
                    continue;
                }
                let c1 = v1 / (v1 + v2);
                if c1 >= 0.8 || 1.0 - c1 >= 0.7 {
                    total += v1 + v2;
                }
            }
        }
        total
    }

    #[test]
    fn reach_avoid_marks_unsafe() {
        let mut p = medical(3);
        p.spec = p.spec.clone().with_safe_states(medical_safe_states());
        let sol = solve_exact(&p, UnfoldOptions::default()).unwrap();
        let unsafe_nodes: Vec<_> = sol
            .mdp
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Unsafe)
            .collect();
        assert!(!unsafe_nodes.is_empty());
        for (q, n) in unsafe_nodes {
            assert_eq!(n.node.state, 2);
            assert!(!sol.mdp.is_expanded(q));
            assert!(sol.values.node_values(q).iter().all(|&v| v == 0.0));
        }
        let free = solve_exact(&medical(3), UnfoldOptions::default()).unwrap();
        assert!(sol.probability <= free.probability + 1e-12);
    }

    #[test]
    fn node_budget_trips() {
        let p = medical(4);
        let err = unfold(&p, UnfoldOptions { node_budget: 10 }).unwrap_err();
        assert!(matches!(err, Error::NodeBudgetExceeded { limit: 10 }));
    }

    #[test]
    fn tie_break_lowest_action() {
        // Two identical models: no action ever moves the belief, all values 0.
        let row = vec![vec![vec![0.5, 0.5]; 2]; 2];
        let t = vec![row.clone(), row];
        let f = crate::model::ModelFamily::from_nested(
            0,
            &t,
            &[vec![1, 1], vec![1, 1]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let p = Problem::new(
            f,
            crate::model::DecisionSpec::new(vec![0.9, 0.9]),
            BudgetSpec::new(2, 10),
        );
        let sol = solve_exact(&p, UnfoldOptions::default()).unwrap();
        assert_eq!(sol.probability, 0.0);
        assert!(sol.policy.entries().all(|(_, _, a)| a == 0));
        assert!(!sol.policy.is_empty());
    }
}
