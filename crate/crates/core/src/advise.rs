//! Step-by-step execution of a policy against a live system whose
//! observations are supplied by an operator.

use crate::error::{Error, Result};
use crate::model::{BeliefNode, Problem};
use crate::policy::Policy;
use crate::sim::{arrival_outcome, choose_action, EpisodeTrace, Outcome};

/// What the session wants next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prompt {
    /// Take `action` and report the observed next state.
    Act { action: usize, fallback: bool },
    /// The session has ended.
    Finished(Outcome),
}

/// Result of feeding one observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Observation {
    Accepted(Prompt),
    /// No candidate model reaches the observed state; nothing changed.
    Unreachable,
}

pub struct AdvisorSession<'a> {
    problem: &'a Problem,
    policy: &'a Policy,
    node: BeliefNode,
    step: usize,
    trace: EpisodeTrace,
    prompt: Prompt,
}

impl<'a> AdvisorSession<'a> {
    pub fn new(problem: &'a Problem, policy: &'a Policy) -> Result<Self> {
        problem.ensure_valid()?;
        let node = BeliefNode::root(&problem.family);
        let trace = EpisodeTrace::start(None, &node);
        let mut session = AdvisorSession {
            problem,
            policy,
            node,
            step: 0,
            trace,
            prompt: Prompt::Finished(Outcome::HorizonExpired),
        };
        session.prompt = session.next_prompt();
        Ok(session)
    }

    fn next_prompt(&mut self) -> Prompt {
        if let Some(outcome) = arrival_outcome(self.problem, self.step, &self.node) {
            self.trace.finish(outcome);
            return Prompt::Finished(outcome);
        }
        match choose_action(self.problem, self.policy, self.step, &self.node) {
            Some((action, fallback)) => Prompt::Act { action, fallback },
            None => {
                self.trace.finish(Outcome::CostExceededBlocked);
                Prompt::Finished(Outcome::CostExceededBlocked)
            }
        }
    }

    pub fn prompt(&self) -> Prompt {
        self.prompt
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn node(&self) -> &BeliefNode {
        &self.node
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    /// Records that the recommended action led to `next_state`.
    pub fn observe(&mut self, next_state: usize) -> Result<Observation> {
        let Prompt::Act { action, fallback } = self.prompt else {
            return Err(Error::Config("the session has already ended".into()));
        };
        let family = &self.problem.family;
        let Some(belief) = family.belief_update(&self.node, action, next_state)? else {
            return Ok(Observation::Unreachable);
        };
        let next = BeliefNode::new(
            next_state,
            belief,
            self.node.cost + family.step_cost(self.node.state, action)?,
        );
        self.trace.push(&self.node, action, fallback, &next);
        self.node = next;
        self.step += 1;
        self.prompt = self.next_prompt();
        Ok(Observation::Accepted(self.prompt))
    }

    pub fn transcript(&self) -> &EpisodeTrace {
        &self.trace
    }
}
