use std::fmt;

use thiserror::Error;

/// One broken invariant of a model family or decision spec, with its location.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowNotStochastic {
        model: usize,
        state: usize,
        action: usize,
        sum: f64,
    },
    ProbabilityOutOfRange {
        model: usize,
        state: usize,
        action: usize,
        next_state: usize,
        value: f64,
    },
    PriorNotNormalized {
        sum: f64,
    },
    PriorEntryNegative {
        model: usize,
        value: f64,
    },
    NegativeCost {
        state: usize,
        action: usize,
        value: i64,
    },
    InitialStateOutOfRange {
        state: usize,
        num_states: usize,
    },
    EmptyDimension {
        what: &'static str,
    },
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    ThresholdOutOfRange {
        model: usize,
        value: f64,
    },
    SafeStateOutOfRange {
        state: usize,
        num_states: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowNotStochastic {
                model,
                state,
                action,
                sum,
            } => write!(
                f,
                "transitions[{model}][{state}][{action}] sums to {sum}, expected 1"
            ),
            Violation::ProbabilityOutOfRange {
                model,
                state,
                action,
                next_state,
                value,
            } => write!(
                f,
                "transitions[{model}][{state}][{action}][{next_state}] = {value} is outside [0, 1]"
            ),
            Violation::PriorNotNormalized { sum } => {
                write!(f, "initial_prior sums to {sum}, expected 1")
            }
            Violation::PriorEntryNegative { model, value } => {
                write!(f, "initial_prior[{model}] = {value} is negative")
            }
            Violation::NegativeCost {
                state,
                action,
                value,
            } => write!(f, "costs[{state}][{action}] = {value} is negative"),
            Violation::InitialStateOutOfRange { state, num_states } => write!(
                f,
                "initial_state {state} is out of range for {num_states} states"
            ),
            Violation::EmptyDimension { what } => write!(f, "{what} must be at least 1"),
            Violation::ShapeMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what} has length {found}, expected {expected}"),
            Violation::ThresholdOutOfRange { model, value } => {
                write!(f, "thresholds[{model}] = {value} must lie in (0.5, 1]")
            }
            Violation::SafeStateOutOfRange { state, num_states } => write!(
                f,
                "safe_states contains {state}, out of range for {num_states} states"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (size {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("invalid model: {}", join_violations(.0))]
    InvalidModel(Vec<Violation>),
    #[error(
        "unfolded belief MDP exceeded the node budget of {limit} nodes; \
         use the sampling solver (--method ams) or lower the horizon"
    )]
    NodeBudgetExceeded { limit: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("layout error: {0}")]
    Layout(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
