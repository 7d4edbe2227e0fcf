//! Policy execution against a hidden true model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BeliefNode, Cost, ModelFamily, Problem};
use crate::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Outcome {
    Decided(usize),
    HorizonExpired,
    CostExceededBlocked,
    UnsafeEntered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub state: usize,
    pub belief: Vec<f64>,
    pub cost: Cost,
    pub action: usize,
    /// The policy had no usable entry and the lowest affordable action was taken.
    pub fallback: bool,
    pub next_state: usize,
}

/// One executed path. `true_model` is unknown for live advisory sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub true_model: Option<usize>,
    pub steps: Vec<TraceStep>,
    pub final_state: usize,
    pub final_belief: Vec<f64>,
    pub final_cost: Cost,
    pub outcome: Option<Outcome>,
    pub decided_correctly: Option<bool>,
}

impl EpisodeTrace {
    pub(crate) fn start(true_model: Option<usize>, root: &BeliefNode) -> Self {
        EpisodeTrace {
            true_model,
            steps: Vec::new(),
            final_state: root.state,
            final_belief: root.belief.clone(),
            final_cost: root.cost,
            outcome: None,
            decided_correctly: None,
        }
    }

    pub(crate) fn push(
        &mut self,
        from: &BeliefNode,
        action: usize,
        fallback: bool,
        to: &BeliefNode,
    ) {
        self.steps.push(TraceStep {
            step: self.steps.len(),
            state: from.state,
            belief: from.belief.clone(),
            cost: from.cost,
            action,
            fallback,
            next_state: to.state,
        });
        self.final_state = to.state;
        self.final_belief = to.belief.clone();
        self.final_cost = to.cost;
    }

    pub(crate) fn finish(&mut self, outcome: Outcome) {
        self.outcome = Some(outcome);
        self.decided_correctly = match (outcome, self.true_model) {
            (Outcome::Decided(i), Some(t)) => Some(i == t),
            _ => None,
        };
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serialises")
    }
}

/// Action to take at `node` on `step`: the policy's choice when it exists and
/// is affordable, otherwise the lowest-index affordable action. The flag is
/// true when the fallback was used.
pub fn choose_action(
    problem: &Problem,
    policy: &Policy,
    step: usize,
    node: &BeliefNode,
) -> Option<(usize, bool)> {
    let family = &problem.family;
    let affordable =
        |a: usize| node.cost + family.cost_unchecked(node.state, a) <= problem.budget.cost_bound;
    if let Some(a) = policy.action(step, &node.key()) {
        if a < family.num_actions() && affordable(a) {
            return Some((a, false));
        }
    }
    (0..family.num_actions())
        .find(|&a| affordable(a))
        .map(|a| (a, true))
}

/// Terminal status of `node` at `step`, checked on arrival: safety, then
/// decision, then horizon.
pub fn arrival_outcome(problem: &Problem, step: usize, node: &BeliefNode) -> Option<Outcome> {
    if !problem.spec.is_safe(node) {
        Some(Outcome::UnsafeEntered)
    } else if let Some(i) = problem.spec.decide(node) {
        Some(Outcome::Decided(i))
    } else if step >= problem.budget.horizon {
        Some(Outcome::HorizonExpired)
    } else {
        None
    }
}

fn sample_index<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let mut u = rng.gen::<f64>();
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        if u < p {
            return i;
        }
        u -= p;
        last = i;
    }
    last
}

/// Runs `policy` from the root with `true_model` generating the transitions.
pub fn simulate_episode<R: Rng + ?Sized>(
    problem: &Problem,
    policy: &Policy,
    true_model: usize,
    rng: &mut R,
) -> Result<EpisodeTrace> {
    let family = &problem.family;
    if true_model >= family.num_models() {
        return Err(Error::IndexOutOfRange {
            what: "model",
            index: true_model,
            len: family.num_models(),
        });
    }
    if family.initial_prior()[true_model] <= 0.0 {
        return Err(Error::Config(format!(
            "model {true_model} has zero prior mass and cannot be simulated"
        )));
    }
    let mut node = BeliefNode::root(family);
    let mut trace = EpisodeTrace::start(Some(true_model), &node);
    let mut step = 0;
    loop {
        if let Some(outcome) = arrival_outcome(problem, step, &node) {
            trace.finish(outcome);
            return Ok(trace);
        }
        let Some((action, fallback)) = choose_action(problem, policy, step, &node) else {
            trace.finish(Outcome::CostExceededBlocked);
            return Ok(trace);
        };
        let next_state = sample_index(family.row(true_model, node.state, action), rng);
        let belief = family
            .belief_update(&node, action, next_state)?
            .expect("the true model gives the observed successor positive mass");
        let next = BeliefNode::new(
            next_state,
            belief,
            node.cost + family.cost_unchecked(node.state, action),
        );
        trace.push(&node, action, fallback, &next);
        node = next;
        step += 1;
    }
}

/// Recomputes the belief sequence of a trace from its observations: the belief
/// before each step, followed by the final belief.
pub fn replay_beliefs(family: &ModelFamily, trace: &EpisodeTrace) -> Result<Vec<Vec<f64>>> {
    let mut node = BeliefNode::root(family);
    let mut out = Vec::with_capacity(trace.steps.len() + 1);
    for step in &trace.steps {
        out.push(node.belief.clone());
        let belief = family
            .belief_update(&node, step.action, step.next_state)?
            .ok_or_else(|| {
                Error::Config(format!(
                    "step {}: successor {} is unreachable",
                    step.step, step.next_state
                ))
            })?;
        node = BeliefNode::new(
            step.next_state,
            belief,
            node.cost + family.step_cost(node.state, step.action)?,
        );
    }
    out.push(node.belief);
    Ok(out)
}

/// Normal-approximation 95% half-width of a proportion.
pub fn half_width(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    /// Episodes decided for this class.
    pub decided: u64,
    /// Of those, episodes whose true model was this class.
    pub correct: u64,
    pub correctness: f64,
    pub correctness_ci95: f64,
}

/// Aggregate of simulated episodes. Confidence half-widths use the normal
/// approximation `1.96 sqrt(p (1 - p) / n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub runs: u64,
    pub decided: u64,
    pub success_rate: f64,
    pub success_ci95: f64,
    pub horizon_expired: u64,
    pub cost_blocked: u64,
    pub unsafe_entered: u64,
    pub fallbacks: u64,
    pub mean_cost: f64,
    pub max_cost: Cost,
    pub per_class: Vec<ClassReport>,
}

impl EvalReport {
    pub fn from_traces(num_models: usize, traces: &[EpisodeTrace]) -> Self {
        let runs = traces.len() as u64;
        let mut decided = 0;
        let mut horizon_expired = 0;
        let mut cost_blocked = 0;
        let mut unsafe_entered = 0;
        let mut fallbacks = 0;
        let mut total_cost = 0u64;
        let mut max_cost = 0;
        let mut per_class = vec![(0u64, 0u64); num_models];
        for t in traces {
            total_cost += t.final_cost;
            max_cost = max_cost.max(t.final_cost);
            fallbacks += t.steps.iter().filter(|s| s.fallback).count() as u64;
            match t.outcome {
                Some(Outcome::Decided(i)) => {
                    decided += 1;
                    per_class[i].0 += 1;
                    if t.decided_correctly == Some(true) {
                        per_class[i].1 += 1;
                    }
                }
                Some(Outcome::HorizonExpired) => horizon_expired += 1,
                Some(Outcome::CostExceededBlocked) => cost_blocked += 1,
                Some(Outcome::UnsafeEntered) => unsafe_entered += 1,
                None => {}
            }
        }
        let rate = |k: u64, n: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let success_rate = rate(decided, runs);
        EvalReport {
            runs,
            decided,
            success_rate,
            success_ci95: half_width(success_rate, runs),
            horizon_expired,
            cost_blocked,
            unsafe_entered,
            fallbacks,
            mean_cost: if runs == 0 {
                0.0
            } else {
                total_cost as f64 / runs as f64
            },
            max_cost,
            per_class: per_class
                .into_iter()
                .map(|(d, c)| {
                    let correctness = rate(c, d);
                    ClassReport {
                        decided: d,
                        correct: c,
                        correctness,
                        correctness_ci95: half_width(correctness, d),
                    }
                })
                .collect(),
        }
    }

    /// CSV with columns `config_hash,runs,success_rate,success_ci95,mean_cost,
    /// max_cost,horizon_expired,cost_blocked,unsafe_entered,fallbacks`, then
    /// `decided_<i>,correctness_<i>,correctness_ci95_<i>` per class.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut header = vec![
            "config_hash".to_string(),
            "runs".into(),
            "success_rate".into(),
            "success_ci95".into(),
            "mean_cost".into(),
            "max_cost".into(),
            "horizon_expired".into(),
            "cost_blocked".into(),
            "unsafe_entered".into(),
            "fallbacks".into(),
        ];
        let mut row = vec![
            config_hash.to_string(),
            self.runs.to_string(),
            self.success_rate.to_string(),
            self.success_ci95.to_string(),
            self.mean_cost.to_string(),
            self.max_cost.to_string(),
            self.horizon_expired.to_string(),
            self.cost_blocked.to_string(),
            self.unsafe_entered.to_string(),
            self.fallbacks.to_string(),
        ];
        for (i, c) in self.per_class.iter().enumerate() {
            header.push(format!("decided_{i}"));
            header.push(format!("correctness_{i}"));
            header.push(format!("correctness_ci95_{i}"));
            row.push(c.decided.to_string());
            row.push(c.correctness.to_string());
            row.push(c.correctness_ci95.to_string());
        }
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

/// Per-episode generator: a ChaCha stream selected by the episode index, so
/// results do not depend on scheduling.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Simulates `runs` episodes in parallel. Each episode draws its true model
/// from the prior unless `true_model` pins it.
pub fn simulate_many(
    problem: &Problem,
    policy: &Policy,
    runs: u64,
    seed: u64,
    true_model: Option<usize>,
) -> Result<Vec<EpisodeTrace>> {
    problem.ensure_valid()?;
    let prior = problem.family.initial_prior();
    (0..runs)
        .into_par_iter()
        .map(|episode| {
            let mut rng = episode_rng(seed, episode);
            let model = match true_model {
                Some(m) => m,
                None => sample_index(prior, &mut rng),
            };
            simulate_episode(problem, policy, model, &mut rng)
        })
        .collect()
}

pub fn evaluate_policy(
    problem: &Problem,
    policy: &Policy,
    runs: u64,
    seed: u64,
    true_model: Option<usize>,
) -> Result<EvalReport> {
    if runs == 0 {
        return Err(Error::Config("need at least one run".into()));
    }
    let traces = simulate_many(problem, policy, runs, seed, true_model)?;
    Ok(EvalReport::from_traces(
        problem.family.num_models(),
        &traces,
    ))
}
