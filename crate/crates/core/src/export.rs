//! Explicit-state export of an unfolded belief MDP for probabilistic model
//! checkers.
//!
//! Three space-separated text files are written for a common stem:
//!
//! * `<stem>.sta`: header `index state cost depth kind b_1 .. b_L`, then one
//!   line per node. `kind` is `goal:<i>` (decision for model `i`), `unsafe`
//!   or `interior`.
//! * `<stem>.tra`: header `num_states num_choices num_transitions`, then one
//!   line `source action target probability` per edge, ordered by source,
//!   then action, then successor. Rows of an action may be sub-stochastic
//!   when part of the mass was never generated; actions pruned for cost are
//!   absent.
//! * `<stem>.lab`: header `0="init" 1="goal" 2="unsafe"`, then
//!   `index: label ..` for every labelled node.
//!
//! Real numbers are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::exact::{ActionEdges, NodeKind, UnfoldedMdp, UnfoldedNode};
use crate::model::{BeliefNode, BudgetSpec};

pub struct ExplicitFiles {
    pub states: String,
    pub transitions: String,
    pub labels: String,
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn render(mdp: &UnfoldedMdp) -> ExplicitFiles {
    let num_models = mdp.node(0).node.belief.len();
    let mut states = String::from("index state cost depth kind");
    for i in 1..=num_models {
        let _ = write!(states, " b_{i}");
    }
    states.push('\n');
    for (q, n) in mdp.nodes().iter().enumerate() {
        let _ = write!(
            states,
            "{q} {} {} {} {}",
            n.node.state,
            n.node.cost,
            n.depth_first_seen,
            kind_token(n.kind)
        );
        for &b in &n.node.belief {
            let _ = write!(states, " {}", real(b));
        }
        states.push('\n');
    }

    let mut body = String::new();
    let mut choices = 0usize;
    let mut transitions = 0usize;
    for q in 0..mdp.len() {
        for a in 0..mdp.num_actions() {
            let Some(edges) = mdp.edges(q, a) else {
                continue;
            };
            choices += 1;
            for &(t, p) in edges {
                transitions += 1;
                let _ = writeln!(body, "{q} {a} {t} {}", real(p));
            }
        }
    }
    let transitions = format!("{} {choices} {transitions}\n{body}", mdp.len());

    let mut labels = String::from("0=\"init\" 1=\"goal\" 2=\"unsafe\"\n");
    for (q, n) in mdp.nodes().iter().enumerate() {
        let mut tags = Vec::new();
        if q == mdp.root() {
            tags.push("0");
        }
        match n.kind {
            NodeKind::Goal(_) => tags.push("1"),
            NodeKind::Unsafe => tags.push("2"),
            NodeKind::Interior => {}
        }
        if !tags.is_empty() {
            let _ = writeln!(labels, "{q}: {}", tags.join(" "));
        }
    }

    ExplicitFiles {
        states,
        transitions,
        labels,
    }
}

fn kind_token(kind: NodeKind) -> String {
    match kind {
        NodeKind::Goal(i) => format!("goal:{i}"),
        other => other.name().to_string(),
    }
}

fn parse_kind(token: &str, line: usize) -> Result<NodeKind> {
    match token {
        "unsafe" => Ok(NodeKind::Unsafe),
        "interior" => Ok(NodeKind::Interior),
        _ => token
            .strip_prefix("goal:")
            .and_then(|i| i.parse().ok())
            .map(NodeKind::Goal)
            .ok_or_else(|| Error::Parse {
                line,
                message: format!("unknown node kind `{token}`"),
            }),
    }
}

/// Writes `<stem>.sta`, `<stem>.tra` and `<stem>.lab`; returns the three paths.
pub fn write_explicit(mdp: &UnfoldedMdp, stem: &Path) -> Result<[PathBuf; 3]> {
    let files = render(mdp);
    let paths = [
        stem.with_extension("sta"),
        stem.with_extension("tra"),
        stem.with_extension("lab"),
    ];
    fs::write(&paths[0], files.states)?;
    fs::write(&paths[1], files.transitions)?;
    fs::write(&paths[2], files.labels)?;
    Ok(paths)
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("missing or malformed {what}"),
        })
}

/// Rebuilds an MDP from state and transition files. The number of actions is
/// taken as one past the largest action index that appears.
pub fn import_explicit(states: &str, transitions: &str, budget: BudgetSpec) -> Result<UnfoldedMdp> {
    let mut nodes = Vec::new();
    for (i, raw) in states.lines().enumerate().skip(1) {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut toks = raw.split_whitespace();
        let index: usize = field(toks.next(), line, "index")?;
        if index != nodes.len() {
            return Err(Error::Parse {
                line,
                message: format!("state index {index} out of order"),
            });
        }
        let state = field(toks.next(), line, "state")?;
        let cost = field(toks.next(), line, "cost")?;
        let depth = field(toks.next(), line, "depth")?;
        let kind = parse_kind(toks.next().unwrap_or(""), line)?;
        let belief = toks
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("malformed belief component `{t}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        nodes.push(UnfoldedNode {
            node: BeliefNode::new(state, belief, cost),
            kind,
            depth_first_seen: depth,
        });
    }

    let mut rows = Vec::new();
    let mut num_actions = 0;
    for (i, raw) in transitions.lines().enumerate().skip(1) {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut toks = raw.split_whitespace();
        let src: usize = field(toks.next(), line, "source")?;
        let action: usize = field(toks.next(), line, "action")?;
        let dst: usize = field(toks.next(), line, "target")?;
        let p: f64 = field(toks.next(), line, "probability")?;
        if src >= nodes.len() {
            return Err(Error::Parse {
                line,
                message: format!("source {src} is not a known state"),
            });
        }
        num_actions = num_actions.max(action + 1);
        rows.push((src, action, dst, p));
    }

    let mut edges: Vec<Vec<ActionEdges>> = vec![Vec::new(); nodes.len()];
    for (src, action, dst, p) in rows {
        let per_action = &mut edges[src];
        if per_action.is_empty() {
            per_action.resize(num_actions, None);
        }
        per_action[action]
            .get_or_insert_with(Vec::new)
            .push((dst, p));
    }
    UnfoldedMdp::from_parts(nodes, edges, num_actions, budget)
}
