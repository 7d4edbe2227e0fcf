//! Three-stage disease model with two candidate diseases.
//!
//! States are disease stages `s1..s3`; actions are treatment 1 (`a1`),
//! treatment 2 (`a2`) and observation only (`a3`).

use std::str::FromStr;

use crate::error::Error;
use crate::model::{BudgetSpec, DecisionSpec, Labels, ModelFamily, Problem};

/// Named threshold pairs `(λ1, λ2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdSet {
    A,
    B,
    C,
}

impl ThresholdSet {
    pub const ALL: [ThresholdSet; 3] = [ThresholdSet::A, ThresholdSet::B, ThresholdSet::C];

    pub fn thresholds(self) -> Vec<f64> {
        match self {
            ThresholdSet::A => vec![0.8, 0.7],
            ThresholdSet::B => vec![0.9, 0.8],
            ThresholdSet::C => vec![0.95, 0.9],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ThresholdSet::A => "a",
            ThresholdSet::B => "b",
            ThresholdSet::C => "c",
        }
    }
}

impl FromStr for ThresholdSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "lambda_a" => Ok(ThresholdSet::A),
            "b" | "lambda_b" => Ok(ThresholdSet::B),
            "c" | "lambda_c" => Ok(ThresholdSet::C),
            other => Err(Error::Config(format!("unknown threshold set `{other}`"))),
        }
    }
}

pub const DEFAULT_HORIZON: usize = 3;
pub const COST_BOUND: u64 = 10;

fn transitions() -> Vec<Vec<Vec<Vec<f64>>>> {
    // [model][state][action][next]
    let m1 = [
        // a1, a2, a3 matrices
        [[0.8, 0.2, 0.0], [0.7, 0.2, 0.1], [0.0, 0.0, 1.0]],
        [[0.6, 0.4, 0.0], [0.2, 0.4, 0.4], [0.0, 0.0, 1.0]],
        [[0.5, 0.5, 0.0], [0.1, 0.6, 0.3], [0.0, 0.0, 1.0]],
    ];
    let m2 = [
        [[0.6, 0.4, 0.0], [0.1, 0.5, 0.4], [0.0, 0.0, 1.0]],
        [[0.9, 0.1, 0.0], [0.8, 0.1, 0.1], [0.0, 0.0, 1.0]],
        [[0.3, 0.7, 0.0], [0.1, 0.3, 0.6], [0.0, 0.0, 1.0]],
    ];
    [m1, m2]
        .iter()
        .map(|per_action| {
            (0..3)
                .map(|s| (0..3).map(|a| per_action[a][s].to_vec()).collect())
                .collect()
        })
        .collect()
}

/// Medical family with prior (0.5, 0.5) at `s1`, thresholds λ_a and `D = 10`.
pub fn builtin_medical() -> Problem {
    let costs = vec![vec![2, 5, 0], vec![6, 4, 0], vec![7, 7, 0]];
    let family = ModelFamily::from_nested(0, &transitions(), &costs, vec![0.5, 0.5])
        .expect("builtin medical model is well-shaped")
        .with_labels(Labels {
            states: vec!["s1".into(), "s2".into(), "s3".into()],
            actions: vec!["a1".into(), "a2".into(), "a3".into()],
            models: vec!["disease1".into(), "disease2".into()],
        });
    Problem::new(
        family,
        DecisionSpec::new(ThresholdSet::A.thresholds()),
        BudgetSpec::new(DEFAULT_HORIZON, COST_BOUND),
    )
}

/// Safe region excluding the late stage `s3`.
pub fn medical_safe_states() -> [usize; 2] {
    [0, 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_as_published() {
        let p = builtin_medical();
        assert_eq!(p.family.row(0, 1, 0), &[0.7, 0.2, 0.1]);
        assert_eq!(p.family.row(1, 1, 1), &[0.8, 0.1, 0.1]);
        assert_eq!(p.family.row(0, 0, 2), &[0.5, 0.5, 0.0]);
        assert_eq!(p.family.step_cost(2, 2).unwrap(), 0);
        assert_eq!(p.family.step_cost(1, 0).unwrap(), 6);
        assert!(p.validate().is_empty());
    }

    #[test]
    fn threshold_names() {
        assert_eq!(
            "b".parse::<ThresholdSet>().unwrap().thresholds(),
            vec![0.9, 0.8]
        );
        assert!("z".parse::<ThresholdSet>().is_err());
    }
}
