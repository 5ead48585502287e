//! Delay-aware relative RMSE.
//!
//! For an estimator whose estimate of `y^{(q)}_i` becomes available `δ`
//! steps later, the error at step `k` compares the current truth with the
//! latest available estimate:
//!
//! ```text
//! ρ_k = sqrt( Σ_{i=δ}^{k} (y_i − ŷ_{i−δ})² / Σ_{i=δ}^{k} y_{i−δ}² )
//! ```
//!
//! With exact estimates this is the *delay floor*, the error any
//! `δ`-delayed differentiator incurs.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{DerivativeOrder, Error, Result};

/// Streaming accumulator for `ρ_k`.
#[derive(Debug, Clone, Default)]
pub struct RmseAccumulator {
    error_energy: f64,
    reference_energy: f64,
}

impl RmseAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the term for one step and returns the current `ρ`, or `None`
    /// while the reference energy is still zero.
    pub fn push(&mut self, truth: f64, delayed_estimate: f64, delayed_truth: f64) -> Option<f64> {
        let e = truth - delayed_estimate;
        self.error_energy += e * e;
        self.reference_energy += delayed_truth * delayed_truth;
        self.value()
    }

    pub fn value(&self) -> Option<f64> {
        (self.reference_energy > 0.0).then(|| (self.error_energy / self.reference_energy).sqrt())
    }
}

/// Last step `k` for which `ρ_k` is computable from the given lengths.
fn last_step(truth_len: usize, estimates_len: usize, delay: usize) -> Result<usize> {
    let end = truth_len.min(estimates_len + delay);
    if end <= delay {
        return Err(Error::invalid(format!(
            "need more than {delay} truth samples and at least one estimate (truth {truth_len}, estimates {estimates_len})"
        )));
    }
    Ok(end - 1)
}

/// `ρ_k` for `k = δ + burn_in, …, K` (entry `j` is step `δ + burn_in + j`).
///
/// A zero burn-in is the standard metric; a positive burn-in drops the
/// first terms of both sums to exclude the initial transient.
pub fn relative_rmse_with_burn_in(
    truth: &[f64],
    estimates: &[f64],
    delay: usize,
    burn_in: usize,
) -> Result<Vec<Option<f64>>> {
    let last = last_step(truth.len(), estimates.len(), delay)?;
    let first = delay + burn_in;
    if first > last {
        return Err(Error::invalid(format!("burn-in {burn_in} leaves no steps (last step {last})")));
    }
    let mut acc = RmseAccumulator::new();
    Ok((first..=last).map(|i| acc.push(truth[i], estimates[i - delay], truth[i - delay])).collect())
}

/// `ρ_k` for `k = δ, …, K`; entries with zero reference energy are `None`.
pub fn relative_rmse(truth: &[f64], estimates: &[f64], delay: usize) -> Result<Vec<Option<f64>>> {
    relative_rmse_with_burn_in(truth, estimates, delay, 0)
}

/// `ρ_{k_f}` of the exact truth delayed by `δ` steps.
pub fn delay_floor(truth: &[f64], delay: usize, k_final: usize) -> Result<f64> {
    if delay == 0 {
        return Ok(0.0);
    }
    if k_final <= delay || k_final >= truth.len() {
        return Err(Error::invalid(format!(
            "delay floor needs delay < k_f < len, got delay={delay}, k_f={k_final}, len={}",
            truth.len()
        )));
    }
    let mut acc = RmseAccumulator::new();
    for i in delay..=k_final {
        acc.push(truth[i], truth[i - delay], truth[i - delay]);
    }
    acc.value().ok_or(Error::UndefinedMetric { step: k_final })
}

/// Median of finite values; `None` if there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

/// Mean of finite values; `None` if there are none.
pub fn mean(values: &[f64]) -> Option<f64> {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Error series of one algorithm on one noisy signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub algorithm_name: String,
    pub derivative_order: DerivativeOrder,
    pub delay_steps: usize,
    /// Steps dropped from the start of both sums; zero for the standard metric.
    pub burn_in: usize,
    /// `ρ_k` for `k = delay_steps + burn_in, …`.
    pub rho_series: Vec<Option<f64>>,
    pub final_rho: Option<f64>,
    pub snr_db: f64,
    pub params: BTreeMap<String, String>,
}

/// Compact form of a report for machine comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseSummary {
    pub name: String,
    pub derivative_order: u8,
    pub delay_steps: usize,
    pub snr_db: f64,
    pub final_rho: Option<f64>,
    pub params: BTreeMap<String, String>,
}

impl RmseReport {
    pub fn new(
        algorithm_name: impl Into<String>,
        derivative_order: DerivativeOrder,
        truth: &[f64],
        estimates: &[f64],
        delay_steps: usize,
        snr_db: f64,
    ) -> Result<Self> {
        Self::with_burn_in(algorithm_name, derivative_order, truth, estimates, delay_steps, 0, snr_db)
    }

    pub fn with_burn_in(
        algorithm_name: impl Into<String>,
        derivative_order: DerivativeOrder,
        truth: &[f64],
        estimates: &[f64],
        delay_steps: usize,
        burn_in: usize,
        snr_db: f64,
    ) -> Result<Self> {
        let rho_series = relative_rmse_with_burn_in(truth, estimates, delay_steps, burn_in)?;
        let final_rho = rho_series.last().copied().flatten();
        Ok(Self {
            algorithm_name: algorithm_name.into(),
            derivative_order,
            delay_steps,
            burn_in,
            rho_series,
            final_rho,
            snr_db,
            params: BTreeMap::new(),
        })
    }

    /// Report for an estimate series with gaps: steps never estimated are
    /// missing data, so both sums start at the first estimated step.
    pub fn from_sparse(
        algorithm_name: impl Into<String>,
        derivative_order: DerivativeOrder,
        truth: &[f64],
        estimates: &[Option<f64>],
        delay_steps: usize,
        snr_db: f64,
    ) -> Result<Self> {
        let burn_in = estimates.iter().position(Option::is_some).ok_or_else(|| Error::invalid("no estimates"))?;
        let dense: Vec<f64> = estimates.iter().map(|e| e.unwrap_or(0.0)).collect();
        Self::with_burn_in(algorithm_name, derivative_order, truth, &dense, delay_steps, burn_in, snr_db)
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn first_step(&self) -> usize {
        self.delay_steps + self.burn_in
    }

    /// `k,rho` rows; undefined entries are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,rho")?;
        for (j, rho) in self.rho_series.iter().enumerate() {
            match rho {
                Some(r) => writeln!(w, "{},{}", self.first_step() + j, r)?,
                None => writeln!(w, "{},", self.first_step() + j)?,
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> RmseSummary {
        RmseSummary {
            name: self.algorithm_name.clone(),
            derivative_order: self.derivative_order.as_u8(),
            delay_steps: self.delay_steps,
            snr_db: self.snr_db,
            final_rho: self.final_rho,
            params: self.params.clone(),
        }
    }
}
