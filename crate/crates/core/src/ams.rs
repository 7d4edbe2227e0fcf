//! Cost-bounded adaptive multi-stage sampling.
//!
//! A recursive estimator of the maximal decision probability from a belief
//! node at depth `i`. Each call spends `N_i` samples at the node: one per
//! action to initialise, then UCB-selected actions
//!
//! ```text
//! a* = argmax_a  Q(a)/N(a) + sqrt(2 ln n / N(a))
//! ```
//!
//! where `Q(a)` accumulates the recursive estimates of sampled successors. The
//! node estimate is `(1/N_i) Σ_a Q(a)`. Node entry checks run in the order
//! cost/horizon, safety, decision.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BeliefNode, ModelFamily, NodeKey, Problem};
use crate::policy::{Policy, PolicyKind, PolicyMetadata};

#[derive(Debug, Clone, PartialEq)]
pub struct AmsConfig {
    /// `N_i` for `i = 0..=H`, or a single entry shared by every stage.
    pub samples_per_stage: Vec<usize>,
    pub seed: u64,
    pub memoize: bool,
}

impl AmsConfig {
    pub fn uniform(samples: usize, seed: u64) -> Self {
        AmsConfig {
            samples_per_stage: vec![samples],
            seed,
            memoize: true,
        }
    }

    pub fn samples_at(&self, depth: usize) -> usize {
        if self.samples_per_stage.len() == 1 {
            self.samples_per_stage[0]
        } else {
            self.samples_per_stage[depth]
        }
    }

    pub fn validate(&self, num_actions: usize, horizon: usize) -> Result<()> {
        let n = self.samples_per_stage.len();
        if n != 1 && n != horizon + 1 {
            return Err(Error::Config(format!(
                "expected 1 or {} sample counts, got {n}",
                horizon + 1
            )));
        }
        if let Some((i, &s)) = self
            .samples_per_stage
            .iter()
            .enumerate()
            .find(|(_, &s)| s < num_actions)
        {
            return Err(Error::Config(format!(
                "stage {i} has {s} samples, fewer than the {num_actions} actions"
            )));
        }
        Ok(())
    }
}

/// Sampling statistics of one `(node, depth)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeStats {
    pub state: usize,
    pub belief: Vec<f64>,
    pub cost: u64,
    pub depth: usize,
    /// `N(a)`, accumulated over every run at this node.
    pub counts: Vec<u64>,
    /// `Q(a)`, accumulated over every run at this node.
    pub returns: Vec<f64>,
    /// Actions whose cost keeps the node within the cost bound.
    pub affordable: Vec<bool>,
    /// Number of completed estimation runs (1 when memoised).
    pub runs: u64,
    pub estimate: f64,
}

impl NodeStats {
    pub fn mean(&self, action: usize) -> f64 {
        if self.counts[action] == 0 {
            0.0
        } else {
            self.returns[action] / self.counts[action] as f64
        }
    }
}

/// Statistics of every internal `(node, depth)` the estimator visited.
#[derive(Debug, Clone, Default)]
pub struct AmsStats {
    pub nodes: HashMap<(NodeKey, usize), NodeStats>,
}

impl AmsStats {
    pub fn get(&self, key: &NodeKey, depth: usize) -> Option<&NodeStats> {
        self.nodes.get(&(key.clone(), depth))
    }

    /// One JSON object per visited node, sorted by depth then key.
    pub fn dump_json_lines(&self) -> String {
        let mut rows: Vec<_> = self.nodes.iter().collect();
        rows.sort_by(|a, b| (a.0 .1, &a.0 .0).cmp(&(b.0 .1, &b.0 .0)));
        rows.into_iter()
            .map(|(_, s)| serde_json::to_string(s).expect("stats serialise") + "\n")
            .collect()
    }
}

/// UCB action choice; every action must have been sampled at least once.
/// Ties go to the lowest index.
pub fn ucb_select(returns: &[f64], counts: &[u64], n: u64) -> usize {
    let ln_n = (n as f64).ln();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (a, (&q, &c)) in returns.iter().zip(counts).enumerate() {
        let c = c as f64;
        let score = q / c + (2.0 * ln_n / c).sqrt();
        if score > best_score {
            best_score = score;
            best = a;
        }
    }
    best
}

/// Draws a successor of `node` under `action` from the mixture distribution.
/// Zero-probability successors are never drawn.
pub fn sample_successor<R: Rng + ?Sized>(
    family: &ModelFamily,
    node: &BeliefNode,
    action: usize,
    rng: &mut R,
) -> BeliefNode {
    let mut successors = family.successors(node, action);
    let total: f64 = successors.iter().map(|s| s.probability).sum();
    let mut u = rng.gen::<f64>() * total;
    let last = successors.len() - 1;
    for (i, s) in successors.iter().enumerate() {
        if u < s.probability || i == last {
            return successors.swap_remove(i).node;
        }
        u -= s.probability;
    }
    unreachable!("successor list is never empty for a stochastic row")
}

/// One estimator run: shared RNG, memo table and statistics.
pub struct CbAms<'a> {
    problem: &'a Problem,
    config: &'a AmsConfig,
    rng: ChaCha8Rng,
    memo: HashMap<(NodeKey, usize), f64>,
    stats: AmsStats,
    samples_drawn: u64,
}

impl<'a> CbAms<'a> {
    pub fn new(problem: &'a Problem, config: &'a AmsConfig) -> Result<Self> {
        problem.ensure_valid()?;
        config.validate(problem.family.num_actions(), problem.budget.horizon)?;
        Ok(CbAms {
            problem,
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            memo: HashMap::new(),
            stats: AmsStats::default(),
            samples_drawn: 0,
        })
    }

    pub fn samples_drawn(&self) -> u64 {
        self.samples_drawn
    }

    pub fn stats(&self) -> &AmsStats {
        &self.stats
    }

    pub fn into_stats(self) -> AmsStats {
        self.stats
    }

    /// Estimated maximal probability of a decision from `node` at `depth`.
    pub fn estimate(&mut self, node: &BeliefNode, depth: usize) -> f64 {
        let problem = self.problem;
        let budget = problem.budget;
        if node.cost > budget.cost_bound || depth > budget.horizon {
            return 0.0;
        }
        if !problem.spec.is_safe(node) {
            return 0.0;
        }
        if problem.spec.decide(node).is_some() {
            return 1.0;
        }
        // Every successor of a depth-H node is past the horizon.
        if depth == budget.horizon {
            return 0.0;
        }
        let key = node.key();
        if self.config.memoize {
            if let Some(&v) = self.memo.get(&(key.clone(), depth)) {
                return v;
            }
        }

        let family = &problem.family;
        let num_actions = family.num_actions();
        let samples = self.config.samples_at(depth);
        let mut counts = vec![0u64; num_actions];
        let mut returns = vec![0.0; num_actions];
        for a in 0..num_actions {
            returns[a] = self.sample_and_recurse(node, a, depth);
            counts[a] = 1;
        }
        let mut n = num_actions as u64;
        while (n as usize) < samples {
            let a = ucb_select(&returns, &counts, n);
            returns[a] += self.sample_and_recurse(node, a, depth);
            counts[a] += 1;
            n += 1;
        }
        let estimate = returns.iter().sum::<f64>() / samples as f64;

        let entry = self
            .stats
            .nodes
            .entry((key.clone(), depth))
            .or_insert_with(|| NodeStats {
                state: node.state,
                belief: node.belief.clone(),
                cost: node.cost,
                depth,
                counts: vec![0; num_actions],
                returns: vec![0.0; num_actions],
                affordable: (0..num_actions)
                    .map(|a| node.cost + family.cost_unchecked(node.state, a) <= budget.cost_bound)
                    .collect(),
                runs: 0,
                estimate: 0.0,
            });
        for a in 0..num_actions {
            entry.counts[a] += counts[a];
            entry.returns[a] += returns[a];
        }
        entry.runs += 1;
        entry.estimate = estimate;

        if self.config.memoize {
            self.memo.insert((key, depth), estimate);
        }
        estimate
    }

    fn sample_and_recurse(&mut self, node: &BeliefNode, action: usize, depth: usize) -> f64 {
        self.samples_drawn += 1;
        let next = sample_successor(&self.problem.family, node, action, &mut self.rng);
        self.estimate(&next, depth + 1)
    }
}

/// Greedy policy from sampling statistics: the affordable action with the
/// highest empirical mean return at each visited `(node, depth)`.
pub fn ams_policy(stats: &AmsStats, horizon: usize, root_probability: f64) -> Policy {
    let mut policy = Policy::new(
        PolicyKind::Sampled,
        horizon,
        PolicyMetadata {
            root_probability,
            params: Default::default(),
        },
    );
    for ((key, depth), s) in &stats.nodes {
        if *depth >= horizon {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for a in 0..s.counts.len() {
            if !s.affordable[a] {
                continue;
            }
            let m = s.mean(a);
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((a, m));
            }
        }
        if let Some((a, _)) = best {
            policy.insert(*depth, key.clone(), a);
        }
    }
    policy
}

#[derive(Debug, Clone)]
pub struct AmsSolution {
    pub estimate: f64,
    pub policy: Policy,
    pub stats: AmsStats,
    pub samples_drawn: u64,
}

pub fn solve_ams(problem: &Problem, config: &AmsConfig) -> Result<AmsSolution> {
    let mut solver = CbAms::new(problem, config)?;
    let root = BeliefNode::root(&problem.family);
    let estimate = solver.estimate(&root, 0);
    let samples_drawn = solver.samples_drawn();
    let stats = solver.into_stats();
    let mut policy = ams_policy(&stats, problem.budget.horizon, estimate);
    let params = &mut policy.metadata.params;
    params.insert("method".into(), "ams".into());
    params.insert("horizon".into(), problem.budget.horizon.to_string());
    params.insert("cost_bound".into(), problem.budget.cost_bound.to_string());
    params.insert(
        "samples_per_stage".into(),
        config
            .samples_per_stage
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    params.insert("seed".into(), config.seed.to_string());
    params.insert("memoize".into(), config.memoize.to_string());
    Ok(AmsSolution {
        estimate,
        policy,
        stats,
        samples_drawn,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub seed: u64,
    pub samples: usize,
    pub estimate: f64,
}

/// Independent replications over `seeds` for each uniform sample count, run in
/// parallel. Rows are ordered by sample count, then seed.
pub fn convergence_study(
    problem: &Problem,
    seeds: &[u64],
    sample_counts: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    let jobs: Vec<(usize, u64)> = sample_counts
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    jobs.par_iter()
        .map(|&(samples, seed)| {
            let config = AmsConfig::uniform(samples, seed);
            let mut solver = CbAms::new(problem, &config)?;
            let estimate = solver.estimate(&BeliefNode::root(&problem.family), 0);
            Ok(ConvergenceRow {
                seed,
                samples,
                estimate,
            })
        })
        .collect()
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("seed,samples,estimate\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.seed, r.samples, r.estimate));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BudgetSpec;
    use crate::models::medical::builtin_medical;

    fn medical(h: usize) -> Problem {
        let mut p = builtin_medical();
        p.budget = BudgetSpec::new(h, 10);
        p
    }

    #[test]
    fn ucb_prefers_higher_mean() {
        assert_eq!(ucb_select(&[1.0, 0.0], &[1, 1], 2), 0);
    }

    #[test]
    fn ucb_prefers_less_sampled() {
        assert_eq!(ucb_select(&[5.0, 0.5], &[10, 1], 11), 1);
    }

    #[test]
    fn ucb_tie_goes_low() {
        assert_eq!(ucb_select(&[2.5, 2.5], &[5, 5], 10), 0);
    }

    #[test]
    fn over_budget_node_is_zero() {
        let p = medical(3);
        let config = AmsConfig::uniform(10, 0);
        let mut s = CbAms::new(&p, &config).unwrap();
        assert_eq!(s.estimate(&BeliefNode::new(1, vec![0.8, 0.2], 11), 0), 0.0);
        assert_eq!(s.estimate(&BeliefNode::new(0, vec![0.5, 0.5], 0), 4), 0.0);
    }

    #[test]
    fn goal_node_is_one() {
        let p = medical(3);
        let config = AmsConfig::uniform(10, 0);
        let mut s = CbAms::new(&p, &config).unwrap();
        assert_eq!(s.estimate(&BeliefNode::new(1, vec![0.8, 0.2], 5), 1), 1.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        let p = medical(3);
        let err = CbAms::new(&p, &AmsConfig::uniform(2, 0)).err().unwrap();
        assert!(matches!(err, Error::Config(_)));
        let bad_len = AmsConfig {
            samples_per_stage: vec![5, 5],
            seed: 0,
            memoize: true,
        };
        assert!(CbAms::new(&p, &bad_len).is_err());
    }

    #[test]
    fn visit_accounting() {
        let p = medical(2);
        let sol = solve_ams(&p, &AmsConfig::uniform(200, 3)).unwrap();
        for s in sol.stats.nodes.values() {
            assert_eq!(s.runs, 1);
            assert_eq!(s.counts.iter().sum::<u64>(), 200);
            assert!(s.counts.iter().all(|&c| c >= 1));
            for a in 0..3 {
                assert!(s.returns[a] >= 0.0 && s.returns[a] <= s.counts[a] as f64);
            }
            assert!((s.returns.iter().sum::<f64>() / 200.0 - s.estimate).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let p = medical(2);
        let a = solve_ams(&p, &AmsConfig::uniform(300, 11)).unwrap();
        let b = solve_ams(&p, &AmsConfig::uniform(300, 11)).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn sampled_successor_frequencies() {
        let p = medical(1);
        let root = BeliefNode::root(&p.family);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 100_000;
        let mut goal = 0;
        for _ in 0..draws {
            let n = sample_successor(&p.family, &root, 1, &mut rng);
            assert_eq!(n.cost, 5);
            if n.state == 1 {
                assert!((n.belief[0] - 0.8).abs() < 1e-12);
                goal += 1;
            } else {
                assert_eq!(n.state, 0);
                assert!((n.belief[0] - 0.4).abs() < 1e-12);
            }
        }
        let freq = goal as f64 / draws as f64;
        let sigma = (0.25f64 * 0.75 / draws as f64).sqrt();
        assert!((freq - 0.25).abs() < 3.0 * sigma, "{freq}");
    }

    #[test]
    fn deterministic_row_always_taken() {
        let p = medical(1);
        let node = BeliefNode::new(2, vec![0.5, 0.5], 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_successor(&p.family, &node, 0, &mut rng).state, 2);
        }
    }

    #[test]
    fn policy_tie_on_zero_means() {
        let mut stats = AmsStats::default();
        let key = BeliefNode::new(0, vec![0.5, 0.5], 0).key();
        stats.nodes.insert(
            (key.clone(), 0),
            NodeStats {
                state: 0,
                belief: vec![0.5, 0.5],
                cost: 0,
                depth: 0,
                counts: vec![1, 3, 1],
                returns: vec![0.0; 3],
                affordable: vec![true; 3],
                runs: 1,
                estimate: 0.0,
            },
        );
        let policy = ams_policy(&stats, 1, 0.0);
        assert_eq!(policy.action(0, &key), Some(0));
    }
}
