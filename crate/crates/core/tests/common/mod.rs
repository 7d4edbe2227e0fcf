//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the library's belief update, unfolding or value
//! iteration. Beliefs are recovered from joint path weights
//! `w_i = prior_i * prod_t T_i(s_t, a_t, s_{t+1})`, and a path's probability
//! is `sum_i w_i`.

#![allow(dead_code)]

use std::collections::HashMap;

use actclass::model::DECISION_TOL;
use actclass::model::{BudgetSpec, DecisionSpec};
use actclass::{BeliefNode, ModelFamily, Policy, Problem};
use proptest::prelude::*;

/// `(action, observed next state)` pairs from the root.
pub type History = Vec<(usize, usize)>;

fn total(w: &[f64]) -> f64 {
    w.iter().sum()
}

/// Posterior over models given `belief` at `state` after observing
/// `action -> next`, by enumerating the joint distribution of model and
/// successor. `None` when the observation has zero probability.
pub fn joint_posterior(
    family: &ModelFamily,
    belief: &[f64],
    state: usize,
    action: usize,
    next: usize,
) -> Option<Vec<f64>> {
    let l = family.num_models();
    let n = family.num_states();
    let mut joint = vec![vec![0.0; n]; l];
    for (i, row) in joint.iter_mut().enumerate() {
        for (t, cell) in row.iter_mut().enumerate() {
            *cell = belief[i] * family.transition(i, state, action, t);
        }
    }
    let marginal: f64 = (0..l).map(|i| joint[i][next]).sum();
    if marginal == 0.0 {
        return None;
    }
    Some((0..l).map(|i| joint[i][next] / marginal).collect())
}

fn decided(problem: &Problem, w: &[f64]) -> bool {
    let z = total(w);
    w.iter()
        .zip(&problem.spec.thresholds)
        .any(|(&wi, &t)| wi / z >= t - DECISION_TOL)
}

fn successor_weights(
    family: &ModelFamily,
    w: &[f64],
    state: usize,
    action: usize,
    next: usize,
) -> Vec<f64> {
    w.iter()
        .enumerate()
        .map(|(i, &wi)| wi * family.transition(i, state, action, next))
        .collect()
}

fn affordable(problem: &Problem, state: usize, cost: u64, action: usize) -> Option<u64> {
    let c = problem.family.step_cost(state, action).unwrap();
    (cost + c <= problem.budget.cost_bound).then_some(cost + c)
}

/// Terminal status of a history node: `Some(1.0)` decided, `Some(0.0)` lost.
fn terminal(problem: &Problem, state: usize, w: &[f64], depth: usize) -> Option<f64> {
    if !problem.spec.is_safe_state(state) {
        Some(0.0)
    } else if decided(problem, w) {
        Some(1.0)
    } else if depth == problem.budget.horizon {
        Some(0.0)
    } else {
        None
    }
}

/// Maximum over history-dependent strategies by recursion on the history
/// tree (no merging of equal beliefs). Returns the conditional success
/// probability of the history whose joint weights are `w`.
pub fn history_max(problem: &Problem, state: usize, w: &[f64], cost: u64, depth: usize) -> f64 {
    if let Some(v) = terminal(problem, state, w, depth) {
        return v;
    }
    let family = &problem.family;
    let z = total(w);
    let mut best = 0.0f64;
    for a in 0..family.num_actions() {
        let Some(next_cost) = affordable(problem, state, cost, a) else {
            continue;
        };
        let mut value = 0.0;
        for t in 0..family.num_states() {
            let w2 = successor_weights(family, w, state, a, t);
            let p = total(&w2) / z;
            if p > 0.0 {
                value += p * history_max(problem, t, &w2, next_cost, depth + 1);
            }
        }
        best = best.max(value);
    }
    best
}

pub fn history_max_root(problem: &Problem) -> f64 {
    let f = &problem.family;
    history_max(problem, f.initial_state(), f.initial_prior(), 0, 0)
}

/// Every deterministic history-dependent strategy, each as an explicit map
/// from history to action. Only histories the strategy itself can reach are
/// assigned.
pub fn all_strategies(problem: &Problem) -> Vec<HashMap<History, usize>> {
    let f = &problem.family;
    enumerate(
        problem,
        Vec::new(),
        f.initial_state(),
        f.initial_prior().to_vec(),
        0,
    )
}

fn enumerate(
    problem: &Problem,
    history: History,
    state: usize,
    w: Vec<f64>,
    cost: u64,
) -> Vec<HashMap<History, usize>> {
    if terminal(problem, state, &w, history.len()).is_some() {
        return vec![HashMap::new()];
    }
    let family = &problem.family;
    let mut out = Vec::new();
    for a in 0..family.num_actions() {
        let Some(next_cost) = affordable(problem, state, cost, a) else {
            continue;
        };
        let mut partial = vec![HashMap::from([(history.clone(), a)])];
        for t in 0..family.num_states() {
            let w2 = successor_weights(family, &w, state, a, t);
            if total(&w2) == 0.0 {
                continue;
            }
            let mut h2 = history.clone();
            h2.push((a, t));
            let subs = enumerate(problem, h2, t, w2, next_cost);
            partial = partial
                .iter()
                .flat_map(|p| {
                    subs.iter().map(move |s| {
                        let mut m = p.clone();
                        m.extend(s.iter().map(|(k, v)| (k.clone(), *v)));
                        m
                    })
                })
                .collect();
        }
        out.extend(partial);
    }
    if out.is_empty() {
        out.push(HashMap::new());
    }
    out
}

/// Probability that `strategy` reaches a decision: the sum of
/// `sum_i prior_i prod_t T_i` over every decision-reaching path.
pub fn strategy_value(problem: &Problem, strategy: &HashMap<History, usize>) -> f64 {
    let f = &problem.family;
    path_sum(
        problem,
        strategy,
        Vec::new(),
        f.initial_state(),
        f.initial_prior().to_vec(),
        0,
    )
}

fn path_sum(
    problem: &Problem,
    strategy: &HashMap<History, usize>,
    history: History,
    state: usize,
    w: Vec<f64>,
    cost: u64,
) -> f64 {
    match terminal(problem, state, &w, history.len()) {
        Some(1.0) => return total(&w),
        Some(_) => return 0.0,
        None => {}
    }
    let Some(&a) = strategy.get(&history) else {
        return 0.0;
    };
    let next_cost = cost + problem.family.step_cost(state, a).unwrap();
    assert!(next_cost <= problem.budget.cost_bound);
    let mut sum = 0.0;
    for t in 0..problem.family.num_states() {
        let w2 = successor_weights(&problem.family, &w, state, a, t);
        if total(&w2) > 0.0 {
            let mut h2 = history.clone();
            h2.push((a, t));
            sum += path_sum(problem, strategy, h2, t, w2, next_cost);
        }
    }
    sum
}

pub fn strategy_enumeration_max(problem: &Problem) -> (f64, usize) {
    let strategies = all_strategies(problem);
    let best = strategies
        .iter()
        .map(|s| strategy_value(problem, s))
        .fold(0.0, f64::max);
    (best, strategies.len())
}

/// Path measure of executing a solver policy: `(decided, total)` where
/// `decided` sums path probabilities ending in a decision and `total` sums
/// the probabilities of all terminal paths. The policy is looked up with the
/// library's belief nodes; the probabilities come from joint weights only.
pub fn policy_path_measure(problem: &Problem, policy: &Policy) -> (f64, f64) {
    let f = &problem.family;
    let root = BeliefNode::root(f);
    walk(problem, policy, &root, f.initial_prior().to_vec(), 0)
}

fn walk(
    problem: &Problem,
    policy: &Policy,
    node: &BeliefNode,
    w: Vec<f64>,
    depth: usize,
) -> (f64, f64) {
    let mass = total(&w);
    match terminal(problem, node.state, &w, depth) {
        Some(1.0) => return (mass, mass),
        Some(_) => return (0.0, mass),
        None => {}
    }
    let Some(a) = policy.action(depth, &node.key()) else {
        return (0.0, mass);
    };
    let f = &problem.family;
    let next_cost = node.cost + f.step_cost(node.state, a).unwrap();
    assert!(
        next_cost <= problem.budget.cost_bound,
        "policy picked an unaffordable action"
    );
    let mut acc = (0.0, 0.0);
    for t in 0..f.num_states() {
        let w2 = successor_weights(f, &w, node.state, a, t);
        if total(&w2) > 0.0 {
            let belief = f.belief_update(node, a, t).unwrap().expect("positive mass");
            let child = BeliefNode::new(t, belief, next_cost);
            let (d, m) = walk(problem, policy, &child, w2, depth + 1);
            acc.0 += d;
            acc.1 += m;
        }
    }
    acc
}

/// Normalises small integer weights into a probability row; an all-zero
/// draw becomes a point mass on `fallback`.
pub fn normalise(weights: &[u32], fallback: usize) -> Vec<f64> {
    let s: u32 = weights.iter().sum();
    if s == 0 {
        let mut row = vec![0.0; weights.len()];
        row[fallback % weights.len()] = 1.0;
        row
    } else {
        weights.iter().map(|&w| w as f64 / s as f64).collect()
    }
}

/// Dimensions `(states, actions, models)`, each in `1..=max`.
pub fn dims(
    max_s: usize,
    max_a: usize,
    max_l: usize,
) -> impl Strategy<Value = (usize, usize, usize)> {
    (1..=max_s, 1..=max_a, 1..=max_l)
}

/// A valid random family with rows and prior built from small integer
/// weights, so that exact ties and zero entries are common.
pub fn family_with(n: usize, m: usize, l: usize) -> impl Strategy<Value = ModelFamily> {
    (
        0..n,
        prop::collection::vec(0u32..4, l),
        prop::collection::vec(prop::collection::vec(0u32..4, n), l * n * m),
        prop::collection::vec(0i64..4, n * m),
    )
        .prop_map(move |(init, prior_w, rows, costs)| {
            let mut prior_w = prior_w;
            if prior_w.iter().all(|&w| w == 0) {
                prior_w[0] = 1;
            }
            let prior = normalise(&prior_w, 0);
            let mut it = rows.iter();
            let transitions: Vec<Vec<Vec<Vec<f64>>>> = (0..l)
                .map(|_| {
                    (0..n)
                        .map(|s| (0..m).map(|_| normalise(it.next().unwrap(), s)).collect())
                        .collect()
                })
                .collect();
            let costs: Vec<Vec<i64>> = costs.chunks(m).map(<[i64]>::to_vec).collect();
            ModelFamily::from_nested(init, &transitions, &costs, prior).unwrap()
        })
}

pub fn any_family(max_s: usize, max_a: usize, max_l: usize) -> impl Strategy<Value = ModelFamily> {
    dims(max_s, max_a, max_l).prop_flat_map(|(n, m, l)| family_with(n, m, l))
}

/// Thresholds in `(0.5, 1]` on a coarse grid.
pub fn thresholds(l: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop::sample::select(vec![0.55, 0.6, 0.7, 0.75, 0.8, 0.9, 1.0]),
        l,
    )
}

/// Random problems: a family from [`family_with`], coarse thresholds, an
/// optional safe region, `H <= max_h` and `D < 8`.
pub fn problem_with(
    max_s: usize,
    max_a: usize,
    max_l: usize,
    max_h: usize,
) -> impl Strategy<Value = Problem> {
    dims(max_s, max_a, max_l).prop_flat_map(move |(n, m, l)| {
        (
            family_with(n, m, l),
            thresholds(l),
            prop::option::of(prop::collection::btree_set(0..n, 1..=n)),
            0..=max_h,
            0u64..8,
        )
            .prop_map(|(family, t, safe, h, d)| {
                let mut spec = DecisionSpec::new(t);
                spec.safe_states = safe;
                Problem::new(family, spec, BudgetSpec::new(h, d))
            })
    })
}
