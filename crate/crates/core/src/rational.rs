//! Exact-rational belief arithmetic.
//!
//! Model probabilities are written as decimals, so each `f64` entry is lifted
//! to the rational number denoted by its shortest round-trip decimal form
//! (`0.7` becomes `7/10`, not the nearest binary fraction). Used for golden
//! checks where successor beliefs are known as exact fractions.

use num::{BigInt, BigRational, Zero};

use crate::error::{Error, Result};
use crate::model::ModelFamily;

/// Exact rational value of the shortest decimal that round-trips to `x`.
pub fn decimal_to_rational(x: f64) -> BigRational {
    let text = format!("{x}");
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let numerator: BigInt = format!("{int_part}{frac_part}")
        .parse()
        .expect("f64 display yields decimal digits");
    let denominator = num::pow(BigInt::from(10u32), frac_part.len());
    let r = BigRational::new(numerator, denominator);
    if negative {
        -r
    } else {
        r
    }
}

/// A model family with every probability held as an exact rational.
#[derive(Debug, Clone)]
pub struct RationalFamily {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<Vec<Vec<Vec<BigRational>>>>,
}

impl RationalFamily {
    pub fn from_family(family: &ModelFamily) -> Self {
        let transitions = family
            .transitions_nested()
            .into_iter()
            .map(|m| {
                m.into_iter()
                    .map(|s| {
                        s.into_iter()
                            .map(|row| row.into_iter().map(decimal_to_rational).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        RationalFamily {
            num_states: family.num_states(),
            num_actions: family.num_actions(),
            transitions,
        }
    }

    fn check(
        &self,
        state: usize,
        action: usize,
        next_state: usize,
        belief: &[BigRational],
    ) -> Result<()> {
        if state >= self.num_states || next_state >= self.num_states {
            return Err(Error::IndexOutOfRange {
                what: "state",
                index: state.max(next_state),
                len: self.num_states,
            });
        }
        if action >= self.num_actions {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: action,
                len: self.num_actions,
            });
        }
        if belief.len() != self.transitions.len() {
            return Err(Error::IndexOutOfRange {
                what: "belief length",
                index: belief.len(),
                len: self.transitions.len(),
            });
        }
        Ok(())
    }

    pub fn transition_prob(
        &self,
        state: usize,
        belief: &[BigRational],
        action: usize,
        next_state: usize,
    ) -> Result<BigRational> {
        self.check(state, action, next_state, belief)?;
        Ok(belief
            .iter()
            .zip(&self.transitions)
            .map(|(b, t)| b * &t[state][action][next_state])
            .fold(BigRational::zero(), |acc, x| acc + x))
    }

    /// Exact posterior; `None` when the successor has probability zero.
    pub fn belief_update(
        &self,
        state: usize,
        belief: &[BigRational],
        action: usize,
        next_state: usize,
    ) -> Result<Option<Vec<BigRational>>> {
        let total = self.transition_prob(state, belief, action, next_state)?;
        if total.is_zero() {
            return Ok(None);
        }
        Ok(Some(
            belief
                .iter()
                .zip(&self.transitions)
                .map(|(b, t)| b * &t[state][action][next_state] / &total)
                .collect(),
        ))
    }
}

/// Lifts a floating-point belief to rationals via its decimal form.
pub fn rational_belief(belief: &[f64]) -> Vec<BigRational> {
    belief.iter().copied().map(decimal_to_rational).collect()
}

/// Convenience for tests: `num / den`.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
