//! Building a problem from command-line flags.

use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use actclass::models::{
    builtin_gridworld, builtin_medical, load_model, medical_safe_states, GridLayout, ThresholdSet,
};
use actclass::{BudgetSpec, Cost, DecisionSpec, Error, ModelFamily, Problem, Result};
use clap::{Args, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Medical,
    Gridworld,
}

/// Where the model comes from and how to override its decision rule and budget.
#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// JSON model file.
    #[arg(long, value_name = "FILE", conflicts_with = "builtin")]
    pub model: Option<PathBuf>,

    /// Built-in case study.
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,

    /// Gridworld layout, ASCII form (gridworld only).
    #[arg(long, value_name = "FILE", requires = "builtin")]
    pub layout: Option<PathBuf>,

    /// Step horizon H.
    #[arg(long)]
    pub horizon: Option<usize>,

    /// Cost bound D.
    #[arg(long)]
    pub cost_bound: Option<Cost>,

    /// Per-model thresholds by model index, e.g. `0.8,0.7`; `a`, `b` or `c`
    /// select the medical threshold sets.
    #[arg(long, value_name = "LIST")]
    pub thresholds: Option<String>,

    /// Reach-avoid mode with the source's default safe region (medical:
    /// s1 and s2; gridworld: every non-sensitive cell).
    #[arg(long, conflicts_with = "no_safe")]
    pub safe: bool,

    /// Plain reachability, dropping any safe region the source defines.
    #[arg(long)]
    pub no_safe: bool,

    /// Reach-avoid mode with an explicit safe region (state labels or indices).
    #[arg(long, value_name = "LIST", conflicts_with_all = ["safe", "no_safe"])]
    pub safe_states: Option<String>,
}

impl ProblemArgs {
    pub fn is_given(&self) -> bool {
        self.model.is_some() || self.builtin.is_some()
    }

    /// Problem before threshold, safety and budget overrides, together with
    /// the source's default safe region.
    fn base(&self) -> Result<(Problem, Option<Vec<usize>>)> {
        match (&self.model, self.builtin) {
            (Some(path), _) => {
                let loaded = load_model(&fs::read_to_string(path)?)?;
                let safe = loaded
                    .spec
                    .as_ref()
                    .and_then(|s| s.safe_states.as_ref())
                    .map(|s| s.iter().copied().collect());
                let spec = loaded.spec.unwrap_or_else(|| DecisionSpec::new(Vec::new()));
                let budget = loaded.budget.unwrap_or(BudgetSpec::new(usize::MAX, 0));
                if loaded.budget.is_none() && (self.horizon.is_none() || self.cost_bound.is_none())
                {
                    return Err(Error::Config(
                        "the model file has no budget; pass --horizon and --cost-bound".into(),
                    ));
                }
                Ok((Problem::new(loaded.family, spec, budget), safe))
            }
            (None, Some(Builtin::Medical)) => {
                if self.layout.is_some() {
                    return Err(Error::Config(
                        "--layout applies to the gridworld only".into(),
                    ));
                }
                Ok((builtin_medical(), Some(medical_safe_states().to_vec())))
            }
            (None, Some(Builtin::Gridworld)) => {
                let layout = match &self.layout {
                    Some(path) => GridLayout::from_ascii(&fs::read_to_string(path)?)?,
                    None => GridLayout::default(),
                };
                let p = builtin_gridworld(&layout)?;
                let safe = p
                    .spec
                    .safe_states
                    .as_ref()
                    .map(|s| s.iter().copied().collect());
                Ok((p, safe))
            }
            (None, None) => Err(Error::Config(
                "pass --model <file> or --builtin <name>".into(),
            )),
        }
    }

    pub fn build(&self) -> Result<Problem> {
        let (mut problem, default_safe) = self.base()?;
        if let Some(h) = self.horizon {
            problem.budget.horizon = h;
        }
        if let Some(d) = self.cost_bound {
            problem.budget.cost_bound = d;
        }
        if let Some(t) = &self.thresholds {
            problem.spec.thresholds = parse_thresholds(t)?;
        }
        if problem.spec.thresholds.is_empty() {
            return Err(Error::Config(
                "the model file has no thresholds; pass --thresholds".into(),
            ));
        }
        if self.no_safe {
            problem.spec.safe_states = None;
        } else if self.safe {
            let safe = default_safe.ok_or_else(|| {
                Error::Config("this model defines no safe region; use --safe-states".into())
            })?;
            problem.spec = problem.spec.clone().with_safe_states(safe);
        } else if let Some(list) = &self.safe_states {
            let safe = parse_states(&problem.family, list)?;
            problem.spec = problem.spec.clone().with_safe_states(safe);
        }
        problem.ensure_valid()?;
        Ok(problem)
    }
}

pub fn parse_thresholds(text: &str) -> Result<Vec<f64>> {
    if let Ok(set) = ThresholdSet::from_str(text) {
        return Ok(set.thresholds());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad threshold `{t}`")))
        })
        .collect()
}

/// Threshold sets for a sweep: `a,b,c` names, or numeric sets separated by `;`.
pub fn parse_threshold_sets(text: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let items: Vec<&str> = if text.contains(';') {
        text.split(';').collect()
    } else if text.split(',').all(|t| ThresholdSet::from_str(t).is_ok()) {
        text.split(',').collect()
    } else {
        vec![text]
    };
    items
        .into_iter()
        .map(|item| {
            let item = item.trim();
            let name = match ThresholdSet::from_str(item) {
                Ok(set) => set.name().to_string(),
                Err(_) => item.to_string(),
            };
            Ok((name, parse_thresholds(item)?))
        })
        .collect()
}

/// Comma-separated values and inclusive ranges `lo-hi`.
pub fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        let bad = || Error::Config(format!("bad list entry `{item}`"));
        if let Some((lo, hi)) = item.split_once('-') {
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            out.extend(lo..=hi);
        } else {
            out.push(item.parse().map_err(|_| bad())?);
        }
    }
    Ok(out)
}

pub fn parse_states(family: &ModelFamily, text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            family
                .parse_state(t)
                .ok_or_else(|| Error::Config(format!("unknown state `{}`", t.trim())))
        })
        .collect()
}

pub fn parse_model(family: &ModelFamily, text: &str) -> Result<usize> {
    let text = text.trim();
    if let Some(i) = family.labels().models.iter().position(|l| l == text) {
        return Ok(i);
    }
    text.parse::<usize>()
        .ok()
        .filter(|&i| i < family.num_models())
        .ok_or_else(|| Error::Config(format!("unknown model `{text}`")))
}
