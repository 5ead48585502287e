//! Retrospective-cost input estimation.
//!
//! The input estimate follows the exactly proper law
//! `d̂_k = Σ_{i=1}^{n_e} P_i d̂_{k−i} + Σ_{i=0}^{n_e} Q_i z_{k−i} = Φ_k θ_k`,
//! whose coefficients `θ` are refined every step by recursive least squares
//! on a retrospective cost built from regressors filtered through the
//! closed-loop Markov parameters of the state estimator.
//!
//! Regressors are stored as column vectors; `Φ_k θ` is the dot product.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::{Error, Result};

/// Orders and weights of the input-estimation subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct RcieConfig {
    n_e: usize,
    n_f: usize,
    r_z: f64,
    r_d: f64,
    r_theta: DMatrix<f64>,
    theta_0: DVector<f64>,
}

impl RcieConfig {
    pub fn new(
        n_e: usize,
        n_f: usize,
        r_z: f64,
        r_d: f64,
        r_theta: DMatrix<f64>,
        theta_0: DVector<f64>,
    ) -> Result<Self> {
        if n_e < 1 || n_f < 1 {
            return Err(Error::invalid(format!("n_e and n_f must be at least 1, got n_e={n_e}, n_f={n_f}")));
        }
        if !(r_z.is_finite() && r_z > 0.0) || !(r_d.is_finite() && r_d > 0.0) {
            return Err(Error::invalid(format!("R_z and R_d must be positive, got R_z={r_z}, R_d={r_d}")));
        }
        let len = 2 * n_e + 1;
        if r_theta.shape() != (len, len) {
            return Err(Error::invalid(format!(
                "R_theta must be {len}x{len} for n_e={n_e}, got {}x{}",
                r_theta.nrows(),
                r_theta.ncols()
            )));
        }
        if theta_0.len() != len {
            return Err(Error::invalid(format!("theta_0 must have {len} entries, got {}", theta_0.len())));
        }
        let asym = (&r_theta - r_theta.transpose()).amax();
        if asym > 1e-12 * r_theta.amax().max(1.0) || r_theta.clone().cholesky().is_none() {
            return Err(Error::invalid("R_theta must be symmetric positive definite"));
        }
        Ok(Self { n_e, n_f, r_z, r_d, r_theta, theta_0 })
    }

    /// `R_θ = r_theta · I` and `θ_0 = 0`.
    pub fn with_scaled_identity(n_e: usize, n_f: usize, r_z: f64, r_d: f64, r_theta: f64) -> Result<Self> {
        let len = 2 * n_e + 1;
        Self::new(n_e, n_f, r_z, r_d, DMatrix::identity(len, len) * r_theta, DVector::zeros(len))
    }

    pub fn n_e(&self) -> usize {
        self.n_e
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn r_z(&self) -> f64 {
        self.r_z
    }

    pub fn r_d(&self) -> f64 {
        self.r_d
    }

    pub fn r_theta(&self) -> &DMatrix<f64> {
        &self.r_theta
    }

    pub fn theta_0(&self) -> &DVector<f64> {
        &self.theta_0
    }

    /// `l_θ = 2 n_e + 1`.
    pub fn theta_len(&self) -> usize {
        2 * self.n_e + 1
    }

    /// First step whose regressor history is complete, `max(n_e, n_f)`.
    pub fn k_n(&self) -> usize {
        self.n_e.max(self.n_f)
    }
}

/// `Φ_k = [d̂_{k−1} … d̂_{k−n_e}, z_k … z_{k−n_e}]`.
///
/// `past_inputs[i]` is `d̂_{k−1−i}` and `residuals[i]` is `z_{k−i}`; missing
/// entries are zero.
pub fn build_regressor(past_inputs: &[f64], residuals: &[f64], n_e: usize) -> DVector<f64> {
    let at = |s: &[f64], i: usize| s.get(i).copied().unwrap_or(0.0);
    DVector::from_iterator(2 * n_e + 1, (0..n_e).map(|i| at(past_inputs, i)).chain((0..=n_e).map(|i| at(residuals, i))))
}

/// `H_1 … H_{n_f}` at step `k`: `H_1 = CB`,
/// `H_i = C Ā_{k−1} ⋯ Ā_{k−(i−1)} B`, and `H_i = 0` for `i > k`.
///
/// `closed_loop[j]` is `Ā_{k−1−j}`; it must hold at least
/// `min(n_f, k) − 1` matrices.
pub fn markov_parameters(
    closed_loop: &[DMatrix<f64>],
    b: &DVector<f64>,
    c: &DMatrix<f64>,
    n_f: usize,
    k: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    if c.shape() != (1, n) {
        return Err(Error::invalid(format!("C must be 1x{n}, got {}x{}", c.nrows(), c.ncols())));
    }
    let live = n_f.min(k);
    if closed_loop.len() + 1 < live {
        return Err(Error::invalid(format!(
            "need {} closed-loop matrices for step {k}, got {}",
            live.saturating_sub(1),
            closed_loop.len()
        )));
    }
    let mut out = vec![0.0; n_f];
    let mut chain = c.clone();
    for (i, slot) in out.iter_mut().enumerate().take(live) {
        if i > 0 {
            let abar = &closed_loop[i - 1];
            if abar.shape() != (n, n) {
                return Err(Error::invalid(format!(
                    "closed-loop matrix must be {n}x{n}, got {}x{}",
                    abar.nrows(),
                    abar.ncols()
                )));
            }
            chain *= abar;
        }
        *slot = (&chain * b)[0];
    }
    Ok(out)
}

/// `Φ_{f,k} = Σ_{i=1}^{n_f} H_i Φ_{k−i}` and `d̂_{f,k} = Σ_{i=1}^{n_f} H_i d̂_{k−i}`.
///
/// `past_regressors[i]` is `Φ_{k−1−i}` and `past_inputs[i]` is `d̂_{k−1−i}`;
/// missing entries count as zero.
pub fn filter_signals(
    markov: &[f64],
    past_regressors: &[DVector<f64>],
    past_inputs: &[f64],
    theta_len: usize,
) -> (DVector<f64>, f64) {
    let mut phi_f = DVector::zeros(theta_len);
    let mut dhat_f = 0.0;
    for (i, &h) in markov.iter().enumerate() {
        if let Some(phi) = past_regressors.get(i) {
            phi_f.axpy(h, phi, 1.0);
        }
        dhat_f += h * past_inputs.get(i).copied().unwrap_or(0.0);
    }
    (phi_f, dhat_f)
}

/// `d̂ = Φ θ`.
pub fn estimate_input(theta: &DVector<f64>, regressor: &DVector<f64>) -> f64 {
    regressor.dot(theta)
}

/// One RLS step minimizing the retrospective cost.
///
/// With `Φ̃ = [Φ_f; Φ]`, `z̃ = [z − d̂_f; 0]` and `R̃ = diag(R_z, R_d)`:
/// `Γ = (R̃⁻¹ + Φ̃ P Φ̃ᵀ)⁻¹`, `P ← P − PΦ̃ᵀΓΦ̃P`, `θ ← θ − PΦ̃ᵀΓ(z̃ + Φ̃θ)`.
#[allow(clippy::too_many_arguments)]
pub fn rls_update(
    theta: &mut DVector<f64>,
    p: &mut DMatrix<f64>,
    regressor: &DVector<f64>,
    filtered_regressor: &DVector<f64>,
    filtered_input: f64,
    residual: f64,
    r_z: f64,
    r_d: f64,
) -> Result<()> {
    let pf = &*p * filtered_regressor;
    let pr = &*p * regressor;
    let s = Matrix2::new(
        1.0 / r_z + filtered_regressor.dot(&pf),
        filtered_regressor.dot(&pr),
        regressor.dot(&pf),
        1.0 / r_d + regressor.dot(&pr),
    );
    let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
    if !(det.is_finite() && det > 0.0) {
        return Err(Error::Numerical(format!("RLS gain matrix is singular (det = {det})")));
    }
    let gamma = Matrix2::new(s[(1, 1)], -s[(0, 1)], -s[(1, 0)], s[(0, 0)]) / det;
    let innovation = Vector2::new(residual - filtered_input + filtered_regressor.dot(theta), regressor.dot(theta));
    let weights = gamma * innovation;
    theta.axpy(-weights[0], &pf, 1.0);
    theta.axpy(-weights[1], &pr, 1.0);

    // P ← P − [pf pr] Γ [pf pr]ᵀ
    let g = [gamma[(0, 0)], gamma[(0, 1)], gamma[(1, 0)], gamma[(1, 1)]];
    p.ger(-g[0], &pf, &pf, 1.0);
    p.ger(-g[1], &pf, &pr, 1.0);
    p.ger(-g[2], &pr, &pf, 1.0);
    p.ger(-g[3], &pr, &pr, 1.0);
    let sym = (&*p + p.transpose()) * 0.5;
    *p = sym;
    Ok(())
}

/// Quantities produced by one [`RcieState::step`].
#[derive(Debug, Clone)]
pub struct RcieStep {
    pub input_estimate: f64,
    pub regressor: DVector<f64>,
    /// `None` while the estimate is frozen at `d̂_0` (before step `k_n − 1`).
    pub update: Option<RlsTerms>,
}

/// The terms fed to the RLS update at one step.
#[derive(Debug, Clone)]
pub struct RlsTerms {
    pub filtered_regressor: DVector<f64>,
    pub filtered_input: f64,
    pub residual: f64,
    pub markov: Vec<f64>,
}

/// Streaming input-estimation subsystem for a model with input matrix `B`
/// and output matrix `C`.
#[derive(Debug, Clone)]
pub struct RcieState {
    config: RcieConfig,
    b: DVector<f64>,
    c: DMatrix<f64>,
    theta: DVector<f64>,
    p: DMatrix<f64>,
    /// `d̂_{k−1}, d̂_{k−2}, …` (most recent first)
    inputs: VecDeque<f64>,
    /// `z_k, z_{k−1}, …`
    residuals: VecDeque<f64>,
    /// `Φ_{k−1}, Φ_{k−2}, …`
    regressors: VecDeque<DVector<f64>>,
    /// `Ā_{k−1}, Ā_{k−2}, …`
    closed_loop: VecDeque<DMatrix<f64>>,
    step: usize,
}

impl RcieState {
    /// Initial state: `θ = θ_0`, `P = R_θ⁻¹`, all histories empty (zero).
    pub fn new(config: RcieConfig, b: DVector<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = b.len();
        if c.shape() != (1, n) {
            return Err(Error::invalid(format!("C must be 1x{n}, got {}x{}", c.nrows(), c.ncols())));
        }
        let p = config
            .r_theta
            .clone()
            .cholesky()
            .map(|ch| ch.inverse())
            .ok_or_else(|| Error::Numerical("R_theta is not invertible".into()))?;
        let theta = config.theta_0.clone();
        Ok(Self {
            b,
            c,
            theta,
            p,
            inputs: VecDeque::with_capacity(config.k_n() + 1),
            residuals: VecDeque::with_capacity(config.n_e + 2),
            regressors: VecDeque::with_capacity(config.n_f + 1),
            closed_loop: VecDeque::with_capacity(config.n_f),
            step: 0,
            config,
        })
    }

    pub fn config(&self) -> &RcieConfig {
        &self.config
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Index of the next step to be processed.
    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Records `Ā_k = A(I + K_{da,k} C)` after the data-assimilation step of
    /// step `k`.
    pub fn record_closed_loop(&mut self, abar: DMatrix<f64>) {
        self.closed_loop.push_front(abar);
        self.closed_loop.truncate(self.config.n_f.saturating_sub(1));
    }

    /// Processes residual `z_k`: forms `Φ_k`, returns `d̂_k = Φ_k θ_k` and
    /// advances `θ` to `θ_{k+1}`.
    pub fn step(&mut self, residual: f64) -> Result<RcieStep> {
        let k = self.step;
        let n_e = self.config.n_e;
        self.residuals.push_front(residual);
        self.residuals.truncate(n_e + 1);

        let regressor = build_regressor(self.inputs.make_contiguous(), self.residuals.make_contiguous(), n_e);

        let (input_estimate, update) = if k + 1 < self.config.k_n() {
            (0.0, None)
        } else {
            let input_estimate = estimate_input(&self.theta, &regressor);
            let closed_loop = self.closed_loop.make_contiguous();
            let markov = markov_parameters(closed_loop, &self.b, &self.c, self.config.n_f, k)?;
            let past_regressors = self.regressors.make_contiguous();
            let past_inputs = self.inputs.make_contiguous();
            let (filtered_regressor, filtered_input) =
                filter_signals(&markov, past_regressors, past_inputs, self.config.theta_len());
            rls_update(
                &mut self.theta,
                &mut self.p,
                &regressor,
                &filtered_regressor,
                filtered_input,
                residual,
                self.config.r_z,
                self.config.r_d,
            )?;
            (input_estimate, Some(RlsTerms { filtered_regressor, filtered_input, residual, markov }))
        };

        self.inputs.push_front(input_estimate);
        self.inputs.truncate(self.config.k_n());
        self.regressors.push_front(regressor.clone());
        self.regressors.truncate(self.config.n_f);
        self.step += 1;
        Ok(RcieStep { input_estimate, regressor, update })
    }
}
