use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::{DerivativeOrder, Differentiator, Error, Estimate, Result};

/// Savitzky–Golay window: `2ℓ+1` samples, polynomial degree `p_d`,
/// derivative order `q`, with `q ≤ p_d ≤ 2ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SgConfig {
    half_window: usize,
    poly_degree: usize,
    derivative_order: DerivativeOrder,
}

impl SgConfig {
    pub fn new(half_window: usize, poly_degree: usize, derivative_order: DerivativeOrder) -> Result<Self> {
        let q = derivative_order.as_u8() as usize;
        if half_window < 1 {
            return Err(Error::invalid("Savitzky-Golay half window must be at least 1"));
        }
        if !(q <= poly_degree && poly_degree <= 2 * half_window) {
            return Err(Error::invalid(format!(
                "Savitzky-Golay requires q <= p_d <= 2l, got q={q}, p_d={poly_degree}, l={half_window}"
            )));
        }
        Ok(Self { half_window, poly_degree, derivative_order })
    }

    pub fn half_window(&self) -> usize {
        self.half_window
    }

    pub fn poly_degree(&self) -> usize {
        self.poly_degree
    }

    pub fn derivative_order(&self) -> DerivativeOrder {
        self.derivative_order
    }

    pub fn window_len(&self) -> usize {
        2 * self.half_window + 1
    }
}

/// Falling factorial `i (i−1) ⋯ (i−q+1)`.
fn falling_factorial(i: usize, q: usize) -> f64 {
    (0..q).map(|j| (i - j) as f64).product()
}

/// Least-squares polynomial coefficients via Householder QR.
fn fit_polynomial(abscissae: &[f64], window: &[f64], degree: usize) -> Result<DVector<f64>> {
    let design = DMatrix::from_fn(abscissae.len(), degree + 1, |r, c| abscissae[r].powi(c as i32));
    // column equilibration; undone on the solution
    let scales: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    let mut scaled = design;
    for (mut col, &s) in scaled.column_iter_mut().zip(&scales) {
        col /= s;
    }
    let qr = scaled.qr();
    let r = qr.r();
    let rhs = qr.q().transpose() * DVector::from_column_slice(window);
    let max_diag = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-13 * max_diag) {
        return Err(Error::Numerical("Savitzky-Golay design matrix is rank deficient".into()));
    }
    let mut coeffs = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("Savitzky-Golay triangular solve failed".into()))?;
    for (c, s) in coeffs.iter_mut().zip(&scales) {
        *c /= s;
    }
    Ok(coeffs)
}

fn check_window(window: &[f64], config: &SgConfig, sample_time_s: f64) -> Result<()> {
    if window.len() != config.window_len() {
        return Err(Error::invalid(format!(
            "Savitzky-Golay window must hold {} samples, got {}",
            config.window_len(),
            window.len()
        )));
    }
    if !(sample_time_s.is_finite() && sample_time_s > 0.0) {
        return Err(Error::invalid(format!("sample time must be positive, got {sample_time_s}")));
    }
    Ok(())
}

/// Derivative estimate at the window centre using window-centred abscissae
/// `−ℓT_s … ℓT_s`, so the polynomial is evaluated at `s = 0`.
pub fn sg_estimate(window: &[f64], config: &SgConfig, sample_time_s: f64) -> Result<f64> {
    check_window(window, config, sample_time_s)?;
    let l = config.half_window as f64;
    // unit-spaced abscissae; the T_s^q factor is applied afterwards
    let abscissae: Vec<f64> = (0..config.window_len()).map(|j| j as f64 - l).collect();
    let coeffs = fit_polynomial(&abscissae, window, config.poly_degree)?;
    let q = config.derivative_order.as_u8() as usize;
    Ok(falling_factorial(q, q) * coeffs[q] / sample_time_s.powi(q as i32))
}

/// Derivative estimate with the window centre at absolute time `center_s`:
/// abscissae `center_s + jT_s` for `j = −ℓ … ℓ`, evaluated as
/// `Σ_{i≥q} Q_{i,q} â_i center_s^{i−q}`.
pub fn sg_estimate_about(window: &[f64], center_s: f64, config: &SgConfig, sample_time_s: f64) -> Result<f64> {
    check_window(window, config, sample_time_s)?;
    let l = config.half_window as f64;
    let abscissae: Vec<f64> = (0..config.window_len()).map(|j| center_s + (j as f64 - l) * sample_time_s).collect();
    let coeffs = fit_polynomial(&abscissae, window, config.poly_degree)?;
    let q = config.derivative_order.as_u8() as usize;
    Ok((q..=config.poly_degree).map(|i| falling_factorial(i, q) * coeffs[i] * center_s.powi((i - q) as i32)).sum())
}

/// Streaming Savitzky–Golay differentiator with precomputed convolution
/// weights. The estimate for step `k − ℓ` is produced when sample `k`
/// arrives, so the reporting delay is `ℓ + 1` steps.
#[derive(Debug, Clone)]
pub struct SavitzkyGolay {
    config: SgConfig,
    weights: Vec<f64>,
    buffer: VecDeque<f64>,
    step: usize,
}

impl SavitzkyGolay {
    pub fn new(config: SgConfig, sample_time_s: f64) -> Result<Self> {
        if !(sample_time_s.is_finite() && sample_time_s > 0.0) {
            return Err(Error::invalid(format!("sample time must be positive, got {sample_time_s}")));
        }
        // the estimate is linear in the window: weight j is the estimate for e_j
        let n = config.window_len();
        let mut weights = vec![0.0; n];
        let mut unit = vec![0.0; n];
        for (j, w) in weights.iter_mut().enumerate() {
            unit[j] = 1.0;
            *w = sg_estimate(&unit, &config, sample_time_s)?;
            unit[j] = 0.0;
        }
        Ok(Self { config, weights, buffer: VecDeque::with_capacity(n), step: 0 })
    }

    pub fn config(&self) -> &SgConfig {
        &self.config
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Differentiator for SavitzkyGolay {
    fn delay_steps(&self) -> usize {
        self.config.half_window + 1
    }

    fn derivative_order(&self) -> DerivativeOrder {
        self.config.derivative_order
    }

    fn push(&mut self, y: f64) -> Result<Option<Estimate>> {
        self.buffer.push_back(y);
        if self.buffer.len() > self.config.window_len() {
            self.buffer.pop_front();
        }
        let step = self.step;
        self.step += 1;
        if self.buffer.len() < self.config.window_len() {
            return Ok(None);
        }
        let value = self.weights.iter().zip(&self.buffer).map(|(w, y)| w * y).sum();
        Ok(Some(Estimate { step: step - self.config.half_window, value }))
    }
}
