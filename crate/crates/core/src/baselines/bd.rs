use std::collections::VecDeque;

use crate::{DerivativeOrder, Differentiator, Error, Estimate, Result};

/// `(y_k − y_{k−1}) / T_s`
pub fn bd_first(prev_y: f64, curr_y: f64, sample_time_s: f64) -> f64 {
    (curr_y - prev_y) / sample_time_s
}

/// `(y_k − 2y_{k−1} + y_{k−2}) / T_s²`
pub fn bd_second(y_km2: f64, y_km1: f64, y_k: f64, sample_time_s: f64) -> f64 {
    (y_k - 2.0 * y_km1 + y_km2) / (sample_time_s * sample_time_s)
}

/// Streaming backward-difference differentiator. Emits its first estimate
/// once `q + 1` samples have arrived.
#[derive(Debug, Clone)]
pub struct BackwardDifference {
    order: DerivativeOrder,
    sample_time_s: f64,
    history: VecDeque<f64>,
    step: usize,
}

impl BackwardDifference {
    pub fn new(order: DerivativeOrder, sample_time_s: f64) -> Result<Self> {
        if !(sample_time_s.is_finite() && sample_time_s > 0.0) {
            return Err(Error::invalid(format!("sample time must be positive, got {sample_time_s}")));
        }
        Ok(Self { order, sample_time_s, history: VecDeque::with_capacity(3), step: 0 })
    }
}

impl Differentiator for BackwardDifference {
    fn delay_steps(&self) -> usize {
        1
    }

    fn derivative_order(&self) -> DerivativeOrder {
        self.order
    }

    fn push(&mut self, y: f64) -> Result<Option<Estimate>> {
        let needed = self.order.as_u8() as usize + 1;
        self.history.push_back(y);
        if self.history.len() > needed {
            self.history.pop_front();
        }
        let step = self.step;
        self.step += 1;
        if self.history.len() < needed {
            return Ok(None);
        }
        let h = &self.history;
        let value = match self.order {
            DerivativeOrder::First => bd_first(h[0], h[1], self.sample_time_s),
            DerivativeOrder::Second => bd_second(h[0], h[1], h[2], self.sample_time_s),
        };
        Ok(Some(Estimate { step, value }))
    }
}
