//! Kalman forecast and data-assimilation recursions for discrete-time
//! integrator models, with residual-variance matching to adapt the
//! process-noise surrogate `V₁ = ηI` and the sensor-noise variance `V₂`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{DerivativeOrder, Error, Result};

/// `x_{k+1} = A x_k + B d_k`, `y_k = C x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
}

impl StateSpaceModel {
    /// `A = 1`, `B = T_s`, `C = 1`.
    pub fn single_integrator(sample_time_s: f64) -> Self {
        Self {
            a: DMatrix::from_element(1, 1, 1.0),
            b: DVector::from_element(1, sample_time_s),
            c: DMatrix::from_element(1, 1, 1.0),
        }
    }

    /// `A = [[1, T_s], [0, 1]]`, `B = [T_s²/2, T_s]ᵀ`, `C = [1, 0]`.
    pub fn double_integrator(sample_time_s: f64) -> Self {
        let ts = sample_time_s;
        Self {
            a: DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]),
            b: DVector::from_vec(vec![0.5 * ts * ts, ts]),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        }
    }

    /// Integrator chain whose input is the `q`-th derivative of the output.
    pub fn for_order(order: DerivativeOrder, sample_time_s: f64) -> Result<Self> {
        if !(sample_time_s.is_finite() && sample_time_s > 0.0) {
            return Err(Error::invalid(format!("sample time must be positive, got {sample_time_s}")));
        }
        Ok(match order {
            DerivativeOrder::First => Self::single_integrator(sample_time_s),
            DerivativeOrder::Second => Self::double_integrator(sample_time_s),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.b.len()
    }

    /// `C M Cᵀ` for an `n×n` matrix `M`.
    pub fn output_quadratic(&self, m: &DMatrix<f64>) -> f64 {
        (&self.c * m * self.c.transpose())[(0, 0)]
    }

    /// `‖C‖² = C Cᵀ`, the slope of `C (ηI) Cᵀ` in `η`.
    pub fn output_gain(&self) -> f64 {
        self.c.norm_squared()
    }

    /// `Ā = A (I + K C)`.
    pub fn closed_loop(&self, gain: &DVector<f64>) -> DMatrix<f64> {
        let n = self.state_dim();
        &self.a * (DMatrix::identity(n, n) + gain * &self.c)
    }
}

/// Filter state and running residual statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct KfState {
    pub x_fc: DVector<f64>,
    pub x_da: DVector<f64>,
    pub p_f: DMatrix<f64>,
    pub p_da: DMatrix<f64>,
    pub k_da: DVector<f64>,
    pub residual_count: usize,
    pub residual_mean: f64,
    pub residual_m2: f64,
}

impl KfState {
    /// Zero state, zero covariances, zero gain.
    pub fn new(n: usize) -> Self {
        Self {
            x_fc: DVector::zeros(n),
            x_da: DVector::zeros(n),
            p_f: DMatrix::zeros(n, n),
            p_da: DMatrix::zeros(n, n),
            k_da: DVector::zeros(n),
            residual_count: 0,
            residual_mean: 0.0,
            residual_m2: 0.0,
        }
    }

    /// `x_fc ← A x_da + B d̂`, `P_f ← A P_da Aᵀ + V₁`.
    pub fn forecast(&mut self, model: &StateSpaceModel, input_estimate: f64, v1: &DMatrix<f64>) {
        self.x_fc = &model.a * &self.x_da + &model.b * input_estimate;
        self.p_f = &model.a * &self.p_da * model.a.transpose() + v1;
    }

    /// `z_k = C x_fc − y_k`; folds `z_k` into the running mean and variance.
    pub fn residual(&mut self, model: &StateSpaceModel, y: f64) -> f64 {
        let z = (&model.c * &self.x_fc)[0] - y;
        self.residual_count += 1;
        let delta = z - self.residual_mean;
        self.residual_mean += delta / self.residual_count as f64;
        self.residual_m2 += delta * (z - self.residual_mean);
        z
    }

    /// Sample variance `Ŝ_k = (1/k) Σ_{i=0}^{k} (z_i − z̄_k)²`; needs at
    /// least two residuals.
    pub fn residual_variance(&self) -> Option<f64> {
        (self.residual_count >= 2).then(|| self.residual_m2 / (self.residual_count - 1) as f64)
    }

    /// `K = −P_f Cᵀ (C P_f Cᵀ + V₂)⁻¹`, `P_da = (I + K C) P_f`,
    /// `x_da = x_fc + K z`.
    pub fn assimilate(&mut self, model: &StateSpaceModel, residual: f64, v2: f64) -> Result<()> {
        let innovation = model.output_quadratic(&self.p_f) + v2;
        if !(innovation.is_finite() && innovation > 0.0) {
            return Err(Error::DegenerateFilter);
        }
        let n = model.state_dim();
        self.k_da = -(&self.p_f * model.c.transpose()).column(0) / innovation;
        let p_da = (DMatrix::identity(n, n) + &self.k_da * &model.c) * &self.p_f;
        self.p_da = (&p_da + p_da.transpose()) * 0.5;
        self.x_da = &self.x_fc + &self.k_da * residual;
        Ok(())
    }

    /// As [`assimilate`](Self::assimilate), but a filter with no forecast
    /// uncertainty (`P_f Cᵀ = 0`) and no sensor noise takes the zero gain
    /// instead of failing.
    pub fn assimilate_or_hold(&mut self, model: &StateSpaceModel, residual: f64, v2: f64) -> Result<()> {
        let cross = &self.p_f * model.c.transpose();
        if v2 == 0.0 && cross.iter().all(|&v| v == 0.0) {
            self.k_da = DVector::zeros(model.state_dim());
            self.p_da = self.p_f.clone();
            self.x_da = self.x_fc.clone();
            return Ok(());
        }
        self.assimilate(model, residual, v2)
    }
}

/// `J = |Ŝ − (C P_f Cᵀ + V₂)|`.
pub fn adaptation_metric(s_hat: f64, p_f: &DMatrix<f64>, model: &StateSpaceModel, v2: f64) -> f64 {
    (s_hat - (model.output_quadratic(p_f) + v2)).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    Linear,
    #[default]
    Logarithmic,
}

/// Search grid over `η ∈ [η_L, η_U]` and the Case-1 blend weight `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub eta_lower: f64,
    pub eta_upper: f64,
    /// `w`; the grid has `w + 1` points including both bounds.
    #[serde(default = "AdaptConfig::default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub grid_scale: GridScale,
    #[serde(default = "AdaptConfig::default_alpha")]
    pub alpha: f64,
}

impl AdaptConfig {
    pub const DEFAULT_GRID_POINTS: usize = 100;
    pub const DEFAULT_ALPHA: f64 = 0.5;

    fn default_grid_points() -> usize {
        Self::DEFAULT_GRID_POINTS
    }

    fn default_alpha() -> f64 {
        Self::DEFAULT_ALPHA
    }

    /// Logarithmic grid with the default `w` and `α`.
    pub fn new(eta_lower: f64, eta_upper: f64) -> Result<Self> {
        let cfg = Self {
            eta_lower,
            eta_upper,
            grid_points: Self::DEFAULT_GRID_POINTS,
            grid_scale: GridScale::Logarithmic,
            alpha: Self::DEFAULT_ALPHA,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_lower.is_finite() && self.eta_upper.is_finite()) {
            return Err(Error::invalid("eta bounds must be finite"));
        }
        if !(0.0 <= self.eta_lower && self.eta_lower < self.eta_upper) {
            return Err(Error::invalid(format!(
                "eta bounds must satisfy 0 <= eta_L < eta_U, got [{}, {}]",
                self.eta_lower, self.eta_upper
            )));
        }
        if self.grid_points < 1 {
            return Err(Error::invalid("eta grid needs w >= 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.grid_scale == GridScale::Logarithmic && self.eta_lower == 0.0 {
            return Err(Error::invalid("a logarithmic eta grid needs eta_L > 0"));
        }
        Ok(())
    }

    /// `η_0 … η_w`, ascending, with both bounds hit exactly.
    pub fn grid(&self) -> Vec<f64> {
        let w = self.grid_points;
        let (lo, hi) = (self.eta_lower, self.eta_upper);
        (0..=w)
            .map(|i| {
                if i == w {
                    return hi;
                }
                let frac = i as f64 / w as f64;
                match self.grid_scale {
                    GridScale::Linear => lo + frac * (hi - lo),
                    GridScale::Logarithmic => lo * (hi / lo).powf(frac),
                }
            })
            .collect()
    }
}

/// `J_f(ηI) = Ŝ − C (A P_da Aᵀ + ηI) Cᵀ` for every grid point.
pub fn forecast_mismatch(p_da: &DMatrix<f64>, model: &StateSpaceModel, s_hat: f64, grid: &[f64]) -> Vec<f64> {
    let base = s_hat - model.output_quadratic(&(&model.a * p_da * model.a.transpose()));
    let slope = model.output_gain();
    grid.iter().map(|eta| base - eta * slope).collect()
}

/// Index minimizing `cost`; the first (smallest η) wins ties.
fn argmin(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Which branch of the adaptation produced the covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptCase {
    /// Some grid point gives a positive `J_f`.
    Matched,
    /// No grid point gives a positive `J_f`; `V₂ = 0`.
    Saturated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adaptation {
    pub eta: f64,
    pub v1: DMatrix<f64>,
    pub v2: f64,
    pub case: AdaptCase,
}

/// Joint `(V₁, V₂)` selection over the η grid.
///
/// `P_da` is the assimilation covariance of the previous step.
pub fn adapt_covariances(
    p_da: &DMatrix<f64>,
    model: &StateSpaceModel,
    s_hat: f64,
    config: &AdaptConfig,
) -> Result<Adaptation> {
    config.validate()?;
    let grid = config.grid();
    let mismatch = forecast_mismatch(p_da, model, s_hat, &grid);
    let positive: Vec<f64> = mismatch.iter().copied().filter(|&j| j > 0.0).collect();
    let n = model.state_dim();
    let (index, case) = if positive.is_empty() {
        (argmin(mismatch.iter().map(|j| j.abs())), AdaptCase::Saturated)
    } else {
        let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = positive.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target = config.alpha * lo + (1.0 - config.alpha) * hi;
        (argmin(mismatch.iter().map(|j| (j - target).abs())), AdaptCase::Matched)
    };
    let index = index.ok_or_else(|| Error::invalid("empty eta grid"))?;
    let eta = grid[index];
    let v2 = match case {
        AdaptCase::Matched => mismatch[index],
        AdaptCase::Saturated => 0.0,
    };
    Ok(Adaptation { eta, v1: DMatrix::identity(n, n) * eta, v2, case })
}

/// `V₁ = ηI` minimizing `|J_f(ηI) − V₂|` for a known sensor variance `V₂`.
pub fn adapt_process_noise(
    p_da: &DMatrix<f64>,
    model: &StateSpaceModel,
    s_hat: f64,
    v2: f64,
    config: &AdaptConfig,
) -> Result<(f64, DMatrix<f64>)> {
    config.validate()?;
    let grid = config.grid();
    let mismatch = forecast_mismatch(p_da, model, s_hat, &grid);
    let index = argmin(mismatch.iter().map(|j| (j - v2).abs())).ok_or_else(|| Error::invalid("empty eta grid"))?;
    let n = model.state_dim();
    Ok((grid[index], DMatrix::identity(n, n) * grid[index]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_forecast() {
        let m = StateSpaceModel::double_integrator(0.01);
        let mut kf = KfState::new(2);
        kf.forecast(&m, 0.0, &DMatrix::zeros(2, 2));
        assert_eq!(kf.x_fc, DVector::zeros(2));
        assert_eq!(kf.p_f, DMatrix::zeros(2, 2));
    }

    #[test]
    fn single_integrator_forecast() {
        let m = StateSpaceModel::single_integrator(0.01);
        let mut kf = KfState::new(1);
        kf.x_da[0] = 1.0;
        kf.forecast(&m, 2.0, &DMatrix::zeros(1, 1));
        assert!((kf.x_fc[0] - 1.02).abs() < 1e-15);
    }

    #[test]
    fn residual_examples() {
        let m = StateSpaceModel::double_integrator(0.1);
        let mut kf = KfState::new(2);
        kf.x_fc = DVector::from_vec(vec![3.0, 7.0]);
        assert_eq!(kf.residual(&m, 3.0), 0.0);
        assert_eq!(kf.residual(&m, 1.0), 2.0);
    }

    #[test]
    fn residual_variance_of_one_two_three() {
        let m = StateSpaceModel::single_integrator(0.1);
        let mut kf = KfState::new(1);
        for y in [-1.0, -2.0, -3.0] {
            kf.residual(&m, y);
        }
        assert!((kf.residual_mean - 2.0).abs() < 1e-15);
        assert!((kf.residual_variance().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn assimilate_without_uncertainty_keeps_forecast() {
        let m = StateSpaceModel::single_integrator(0.1);
        let mut kf = KfState::new(1);
        kf.x_fc[0] = 4.0;
        kf.assimilate(&m, 1.5, 0.3).unwrap();
        assert_eq!(kf.k_da[0], 0.0);
        assert_eq!(kf.x_da[0], 4.0);
    }

    #[test]
    fn assimilate_scalar_closed_form() {
        let m = StateSpaceModel::single_integrator(0.1);
        let mut kf = KfState::new(1);
        kf.p_f[(0, 0)] = 1.0;
        kf.assimilate(&m, 2.0, 1.0).unwrap();
        assert_eq!(kf.k_da[0], -0.5);
        assert_eq!(kf.p_da[(0, 0)], 0.5);
        assert_eq!(kf.x_da[0], -1.0);
    }

    #[test]
    fn degenerate_innovation_is_an_error() {
        let m = StateSpaceModel::single_integrator(0.1);
        let mut kf = KfState::new(1);
        assert!(matches!(kf.assimilate(&m, 1.0, 0.0), Err(Error::DegenerateFilter)));
        kf.assimilate_or_hold(&m, 1.0, 0.0).unwrap();
        assert_eq!(kf.k_da[0], 0.0);
    }

    #[test]
    fn gain_shrinks_as_sensor_noise_grows() {
        let m = StateSpaceModel::single_integrator(0.1);
        let gains: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&v2| {
                let mut kf = KfState::new(1);
                kf.p_f[(0, 0)] = 2.0;
                kf.assimilate(&m, 0.0, v2).unwrap();
                kf.k_da[0].abs()
            })
            .collect();
        assert!(gains[0] > gains[1] && gains[1] > gains[2], "{gains:?}");
    }

    #[test]
    fn metric_examples() {
        let m = StateSpaceModel::single_integrator(0.1);
        let pf = DMatrix::from_element(1, 1, 2.0);
        assert_eq!(adaptation_metric(3.0, &pf, &m, 1.0), 0.0);
        assert_eq!(adaptation_metric(5.0, &pf, &m, 1.0), 2.0);
    }

    #[test]
    fn saturated_case_picks_smallest_eta() {
        let m = StateSpaceModel::double_integrator(0.01);
        let cfg =
            AdaptConfig { eta_lower: 0.1, eta_upper: 1.0, grid_points: 9, grid_scale: GridScale::Linear, alpha: 0.5 };
        let a = adapt_covariances(&DMatrix::zeros(2, 2), &m, 0.0, &cfg).unwrap();
        assert_eq!(a.case, AdaptCase::Saturated);
        assert_eq!(a.eta, 0.1);
        assert_eq!(a.v2, 0.0);
        assert_eq!(a.v1, DMatrix::identity(2, 2) * 0.1);
    }

    #[test]
    fn matched_case_three_point_grid() {
        let m = StateSpaceModel::single_integrator(0.01);
        let cfg =
            AdaptConfig { eta_lower: 0.25, eta_upper: 0.75, grid_points: 2, grid_scale: GridScale::Linear, alpha: 0.5 };
        assert_eq!(cfg.grid(), vec![0.25, 0.5, 0.75]);
        let a = adapt_covariances(&DMatrix::zeros(1, 1), &m, 1.0, &cfg).unwrap();
        assert_eq!(a.case, AdaptCase::Matched);
        assert_eq!(a.eta, 0.5);
        assert_eq!(a.v2, 0.5);
    }

    #[test]
    fn alpha_one_picks_largest_positive_eta() {
        let m = StateSpaceModel::single_integrator(0.01);
        let cfg =
            AdaptConfig { eta_lower: 0.1, eta_upper: 2.0, grid_points: 19, grid_scale: GridScale::Linear, alpha: 1.0 };
        // J_f = 1.05 - eta is positive up to eta = 1.0
        let a = adapt_covariances(&DMatrix::zeros(1, 1), &m, 1.05, &cfg).unwrap();
        assert!((a.eta - 1.0).abs() < 1e-12, "{}", a.eta);
        assert!((a.v2 - 0.05).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(AdaptConfig::new(1.0, 1.0).is_err());
        assert!(AdaptConfig::new(0.0, 1.0).is_err());
        assert!(AdaptConfig::new(-1.0, 1.0).is_err());
        let lin = AdaptConfig { grid_scale: GridScale::Linear, ..AdaptConfig::new(1e-3, 1.0).unwrap() };
        assert!(AdaptConfig { eta_lower: 0.0, ..lin }.validate().is_ok());
        assert!(AdaptConfig { grid_points: 0, ..lin }.validate().is_err());
        assert!(AdaptConfig { alpha: 1.5, ..lin }.validate().is_err());
    }

    #[test]
    fn log_grid_hits_bounds() {
        let g = AdaptConfig::new(1e-6, 1e2).unwrap().grid();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 1e-6);
        assert_eq!(g[100], 1e2);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
