use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::{Cost, NodeKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Exact,
    Sampled,
}

/// Solver parameters and the root probability the solver reported.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetadata {
    pub root_probability: f64,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

/// Map from `(time step, belief node)` to an action index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PolicyRepr", from = "PolicyRepr")]
pub struct Policy {
    pub kind: PolicyKind,
    pub horizon: usize,
    pub metadata: PolicyMetadata,
    actions: HashMap<(usize, NodeKey), usize>,
}

impl Policy {
    pub fn new(kind: PolicyKind, horizon: usize, metadata: PolicyMetadata) -> Self {
        Policy {
            kind,
            horizon,
            metadata,
            actions: HashMap::new(),
        }
    }

    pub fn insert(&mut self, step: usize, key: NodeKey, action: usize) {
        self.actions.insert((step, key), action);
    }

    pub fn action(&self, step: usize, key: &NodeKey) -> Option<usize> {
        self.actions.get(&(step, key.clone())).copied()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &NodeKey, usize)> {
        self.actions.iter().map(|((i, k), &a)| (*i, k, a))
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyEntry {
    step: usize,
    state: usize,
    cost: Cost,
    belief: Vec<i64>,
    action: usize,
}

#[derive(Serialize, Deserialize)]
struct PolicyRepr {
    kind: PolicyKind,
    horizon: usize,
    metadata: PolicyMetadata,
    entries: Vec<PolicyEntry>,
}

impl From<Policy> for PolicyRepr {
    fn from(p: Policy) -> Self {
        let mut entries: Vec<PolicyEntry> = p
            .actions
            .into_iter()
            .map(|((step, key), action)| PolicyEntry {
                step,
                state: key.state,
                cost: key.cost,
                belief: key.belief,
                action,
            })
            .collect();
        entries.sort_by(|a, b| {
            (a.step, a.state, a.cost, &a.belief).cmp(&(b.step, b.state, b.cost, &b.belief))
        });
        PolicyRepr {
            kind: p.kind,
            horizon: p.horizon,
            metadata: p.metadata,
            entries,
        }
    }
}

impl From<PolicyRepr> for Policy {
    fn from(r: PolicyRepr) -> Self {
        let actions = r
            .entries
            .into_iter()
            .map(|e| {
                (
                    (
                        e.step,
                        NodeKey {
                            state: e.state,
                            cost: e.cost,
                            belief: e.belief,
                        },
                    ),
                    e.action,
                )
            })
            .collect();
        Policy {
            kind: r.kind,
            horizon: r.horizon,
            metadata: r.metadata,
            actions,
        }
    }
}
