use serde::{Deserialize, Serialize};

use crate::Result;

/// Order of the derivative being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DerivativeOrder {
    First,
    Second,
}

impl DerivativeOrder {
    pub fn as_u8(self) -> u8 {
        match self {
            DerivativeOrder::First => 1,
            DerivativeOrder::Second => 2,
        }
    }

    pub fn from_u8(q: u8) -> Option<Self> {
        match q {
            1 => Some(DerivativeOrder::First),
            2 => Some(DerivativeOrder::Second),
            _ => None,
        }
    }
}

impl std::fmt::Display for DerivativeOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// A derivative estimate together with the sample step it refers to.
///
/// A differentiator with delay `δ` that emits an estimate for step `step`
/// makes it available to a consumer at step `step + δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub step: usize,
    pub value: f64,
}

/// A single-owner streaming differentiator fed one sample at a time.
pub trait Differentiator {
    /// Number of steps between a sample instant and the availability of its
    /// derivative estimate.
    fn delay_steps(&self) -> usize;

    fn derivative_order(&self) -> DerivativeOrder;

    /// Feeds `y_k` and returns the estimate computed at this step, if any.
    fn push(&mut self, y: f64) -> Result<Option<Estimate>>;
}

/// Runs `diff` over `values` and returns estimates indexed by the step they
/// estimate. Steps for which no estimate is ever produced hold `0.0`, the
/// output a real-time consumer sees before the first estimate arrives.
pub fn estimate_series<D: Differentiator + ?Sized>(diff: &mut D, values: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; values.len()];
    for &y in values {
        if let Some(est) = diff.push(y)? {
            if let Some(slot) = out.get_mut(est.step) {
                *slot = est.value;
            }
        }
    }
    Ok(out)
}

/// Runs `diff` over `values` and returns estimates indexed by the step they
/// estimate, with `None` for steps that are never estimated.
pub fn sparse_estimate_series<D: Differentiator + ?Sized>(diff: &mut D, values: &[f64]) -> Result<Vec<Option<f64>>> {
    let mut out = vec![None; values.len()];
    for &y in values {
        if let Some(est) = diff.push(y)? {
            if let Some(slot) = out.get_mut(est.step) {
                *slot = Some(est.value);
            }
        }
    }
    Ok(out)
}
