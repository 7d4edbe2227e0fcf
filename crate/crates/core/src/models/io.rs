//! JSON model documents.
//!
//! ```json
//! {
//!   "num_states": 3, "num_actions": 3, "num_models": 2,
//!   "initial_state": 0,
//!   "initial_prior": [0.5, 0.5],
//!   "transitions": [[[[0.8, 0.2, 0.0], ...]]],   // [model][state][action][next_state]
//!   "costs": [[2, 5, 0], ...],                    // [state][action]
//!   "labels": {"states": [...], "actions": [...], "models": [...]},
//!   "decision": {"thresholds": [0.8, 0.7], "safe_states": [0, 1]},
//!   "budget": {"horizon": 3, "cost_bound": 10}
//! }
//! ```
//!
//! `labels`, `decision` and `budget` are optional. Numbers are written in
//! their shortest round-trip decimal form, so save/load is bit-exact.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{BudgetSpec, DecisionSpec, Labels, ModelFamily, Problem};
use crate::policy::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_models: usize,
    pub initial_state: usize,
    pub initial_prior: Vec<f64>,
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    pub costs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Labels::is_empty")]
    pub labels: Labels,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSpec>,
}

/// A model family with whatever decision spec and budget the document carried.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub family: ModelFamily,
    pub spec: Option<DecisionSpec>,
    pub budget: Option<BudgetSpec>,
}

const REQUIRED: [&str; 7] = [
    "num_states",
    "num_actions",
    "num_models",
    "initial_state",
    "initial_prior",
    "transitions",
    "costs",
];

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn check_len(path: &str, found: usize, expected: usize) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(schema(
            path,
            format!("expected {expected} entries, found {found}"),
        ))
    }
}

impl ModelDocument {
    pub fn from_parts(
        family: &ModelFamily,
        spec: Option<&DecisionSpec>,
        budget: Option<&BudgetSpec>,
    ) -> Self {
        ModelDocument {
            num_states: family.num_states(),
            num_actions: family.num_actions(),
            num_models: family.num_models(),
            initial_state: family.initial_state(),
            initial_prior: family.initial_prior().to_vec(),
            transitions: family.transitions_nested(),
            costs: family
                .costs_nested()
                .into_iter()
                .map(|row| row.into_iter().map(|c| c as f64).collect())
                .collect(),
            labels: family.labels().clone(),
            decision: spec.cloned(),
            budget: budget.copied(),
        }
    }

    fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let Some(obj) = value.as_object() else {
            return Err(schema("$", "expected a JSON object"));
        };
        for field in REQUIRED {
            if !obj.contains_key(field) {
                return Err(schema(field, "missing required field"));
            }
        }
        serde_json::from_value(value).map_err(|e| schema("$", e.to_string()))
    }

    fn check_shape(&self) -> Result<()> {
        let (n, m, l) = (self.num_states, self.num_actions, self.num_models);
        check_len("initial_prior", self.initial_prior.len(), l)?;
        check_len("transitions", self.transitions.len(), l)?;
        for (i, per_model) in self.transitions.iter().enumerate() {
            check_len(&format!("transitions[{i}]"), per_model.len(), n)?;
            for (s, per_state) in per_model.iter().enumerate() {
                check_len(&format!("transitions[{i}][{s}]"), per_state.len(), m)?;
                for (a, row) in per_state.iter().enumerate() {
                    check_len(&format!("transitions[{i}][{s}][{a}]"), row.len(), n)?;
                }
            }
        }
        check_len("costs", self.costs.len(), n)?;
        for (s, row) in self.costs.iter().enumerate() {
            check_len(&format!("costs[{s}]"), row.len(), m)?;
        }
        for (what, labels, expected) in [
            ("labels.states", &self.labels.states, n),
            ("labels.actions", &self.labels.actions, m),
            ("labels.models", &self.labels.models, l),
        ] {
            if !labels.is_empty() {
                check_len(what, labels.len(), expected)?;
            }
        }
        Ok(())
    }

    fn integer_costs(&self) -> Result<Vec<Vec<i64>>> {
        self.costs
            .iter()
            .enumerate()
            .map(|(s, row)| {
                row.iter()
                    .enumerate()
                    .map(|(a, &c)| {
                        if c.fract() != 0.0 || !c.is_finite() || c.abs() > 9.0e15 {
                            Err(schema(
                                format!("costs[{s}][{a}]"),
                                format!(
                                    "cost {c} is not an integer; rescale the cost unit so every cost is a whole number"
                                ),
                            ))
                        } else {
                            Ok(c as i64)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn into_loaded(self) -> Result<LoadedModel> {
        self.check_shape()?;
        let costs = self.integer_costs()?;
        let family = ModelFamily::from_nested(
            self.initial_state,
            &self.transitions,
            &costs,
            self.initial_prior,
        )?
        .with_labels(self.labels);
        let mut violations = family.validate();
        if let Some(spec) = &self.decision {
            violations.extend(spec.validate(&family));
        }
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }
        Ok(LoadedModel {
            family,
            spec: self.decision,
            budget: self.budget,
        })
    }
}

/// Parses and validates a model document.
pub fn load_model(text: &str) -> Result<LoadedModel> {
    ModelDocument::parse(text)?.into_loaded()
}

pub fn save_model(
    family: &ModelFamily,
    spec: Option<&DecisionSpec>,
    budget: Option<&BudgetSpec>,
) -> String {
    serde_json::to_string_pretty(&ModelDocument::from_parts(family, spec, budget))
        .expect("model serialises")
}

pub fn save_problem(problem: &Problem) -> String {
    save_model(&problem.family, Some(&problem.spec), Some(&problem.budget))
}

/// Loads a document that must carry both a decision spec and a budget.
pub fn load_problem(text: &str) -> Result<Problem> {
    let loaded = load_model(text)?;
    let spec = loaded
        .spec
        .ok_or_else(|| schema("decision", "missing required field"))?;
    let budget = loaded
        .budget
        .ok_or_else(|| schema("budget", "missing required field"))?;
    Ok(Problem::new(loaded.family, spec, budget))
}

/// SHA-256 of the canonical problem document, hex encoded.
pub fn problem_hash(problem: &Problem) -> String {
    let doc =
        ModelDocument::from_parts(&problem.family, Some(&problem.spec), Some(&problem.budget));
    let canonical = serde_json::to_string(&doc).expect("model serialises");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// A policy together with the problem it was computed for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub model_hash: String,
    pub problem: ModelDocument,
    pub policy: Policy,
}

impl PolicyFile {
    pub fn new(problem: &Problem, policy: Policy) -> Self {
        PolicyFile {
            model_hash: problem_hash(problem),
            problem: ModelDocument::from_parts(
                &problem.family,
                Some(&problem.spec),
                Some(&problem.budget),
            ),
            policy,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy file serialises")
    }

    /// Parses a policy file and returns the embedded problem; fails if the
    /// recorded hash does not match the embedded problem.
    pub fn load(text: &str) -> Result<(Problem, Policy)> {
        let file: PolicyFile = serde_json::from_str(text)?;
        let problem = load_problem(&serde_json::to_string(&file.problem)?)?;
        let hash = problem_hash(&problem);
        if hash != file.model_hash {
            return Err(schema(
                "model_hash",
                format!(
                    "recorded {} but embedded problem hashes to {hash}",
                    file.model_hash
                ),
            ));
        }
        Ok((problem, file.policy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Violation;
    use crate::models::gridworld::{builtin_gridworld, GridLayout};
    use crate::models::medical::builtin_medical;

    #[test]
    fn medical_round_trip() {
        let p = builtin_medical();
        let text = save_problem(&p);
        let back = load_problem(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn gridworld_round_trip_bit_exact() {
        let p = builtin_gridworld(&GridLayout::default()).unwrap();
        let back = load_problem(&save_problem(&p)).unwrap();
        assert_eq!(
            back.family.transitions_nested(),
            p.family.transitions_nested()
        );
        assert_eq!(back, p);
    }

    #[test]
    fn missing_prior_names_field() {
        let mut v: Value = serde_json::from_str(&save_problem(&builtin_medical())).unwrap();
        v.as_object_mut().unwrap().remove("initial_prior");
        let err = load_model(&v.to_string()).unwrap_err();
        match err {
            Error::Schema { path, .. } => assert_eq!(path, "initial_prior"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn negative_cost_is_a_violation() {
        let mut v: Value = serde_json::from_str(&save_problem(&builtin_medical())).unwrap();
        v["costs"][1][2] = serde_json::json!(-3);
        match load_model(&v.to_string()).unwrap_err() {
            Error::InvalidModel(vs) => assert_eq!(
                vs,
                vec![Violation::NegativeCost {
                    state: 1,
                    action: 2,
                    value: -3
                }]
            ),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn fractional_cost_rejected() {
        let mut v: Value = serde_json::from_str(&save_problem(&builtin_medical())).unwrap();
        v["costs"][0][0] = serde_json::json!(2.5);
        let err = load_model(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("rescale"));
    }

    #[test]
    fn ragged_row_reports_path() {
        let mut v: Value = serde_json::from_str(&save_problem(&builtin_medical())).unwrap();
        v["transitions"][1][2][0] = serde_json::json!([0.5, 0.5]);
        match load_model(&v.to_string()).unwrap_err() {
            Error::Schema { path, .. } => assert_eq!(path, "transitions[1][2][0]"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn policy_file_hash_checked() {
        let p = builtin_medical();
        let policy = Policy::new(crate::policy::PolicyKind::Exact, 3, Default::default());
        let file = PolicyFile::new(&p, policy.clone());
        let (back, pol) = PolicyFile::load(&file.to_json()).unwrap();
        assert_eq!(back, p);
        assert_eq!(pol, policy);
        let mut tampered = file;
        tampered.problem.initial_prior = vec![0.4, 0.6];
        assert!(PolicyFile::load(&tampered.to_json()).is_err());
    }
}
