//! Adaptive input estimation for causal differentiation.
//!
//! The sampled signal is modelled as the output of a single (first
//! derivative) or double (second derivative) discrete-time integrator
//! driven by an unknown input `d_k`. Each step computes the Kalman residual,
//! updates the input estimate `d̂_k` by retrospective-cost RLS, selects the
//! noise covariances according to the variant, assimilates the measurement
//! and forecasts the next state. `d̂_k` is the derivative estimate.
//!
//! | variant | `V₁`                    | `V₂`                    |
//! |---------|-------------------------|-------------------------|
//! | NSE     | fixed                   | fixed                   |
//! | SSE     | `ηI` matched to fixed `V₂` | fixed                |
//! | ASE     | `ηI` from the grid search | from the grid search  |

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::askf::{adapt_covariances, adapt_process_noise, AdaptConfig, KfState, StateSpaceModel};
use crate::rcie::{RcieConfig, RcieState};
use crate::signals::SampledSignal;
use crate::{DerivativeOrder, Differentiator, Error, Estimate, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AieMode {
    /// Non-adaptive state estimation.
    Nse,
    /// Semi-adaptive: `V₁` adapted, `V₂` known.
    Sse,
    /// Adaptive: both covariances adapted.
    Ase,
}

impl std::fmt::Display for AieMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AieMode::Nse => "NSE",
            AieMode::Sse => "SSE",
            AieMode::Ase => "ASE",
        })
    }
}

/// Covariance-selection policy of an estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct AieVariant {
    pub mode: AieMode,
    pub fixed_v1: Option<DMatrix<f64>>,
    pub fixed_v2: Option<f64>,
    pub adapt: Option<AdaptConfig>,
}

impl AieVariant {
    pub fn nse(v1: DMatrix<f64>, v2: f64) -> Self {
        Self { mode: AieMode::Nse, fixed_v1: Some(v1), fixed_v2: Some(v2), adapt: None }
    }

    pub fn sse(v2: f64, adapt: AdaptConfig) -> Self {
        Self { mode: AieMode::Sse, fixed_v1: None, fixed_v2: Some(v2), adapt: Some(adapt) }
    }

    pub fn ase(adapt: AdaptConfig) -> Self {
        Self { mode: AieMode::Ase, fixed_v1: None, fixed_v2: None, adapt: Some(adapt) }
    }

    /// Checks that the fields required by the mode are present and valid
    /// for an `n`-state model.
    pub fn validate(&self, n: usize) -> Result<()> {
        let need_v1 = self.mode == AieMode::Nse;
        let need_v2 = matches!(self.mode, AieMode::Nse | AieMode::Sse);
        let need_adapt = matches!(self.mode, AieMode::Sse | AieMode::Ase);
        if need_v1 {
            let v1 = self.fixed_v1.as_ref().ok_or_else(|| Error::invalid("NSE needs a fixed V1"))?;
            if v1.shape() != (n, n) {
                return Err(Error::invalid(format!("V1 must be {n}x{n}, got {}x{}", v1.nrows(), v1.ncols())));
            }
            let asym = (v1 - v1.transpose()).amax();
            let min_eig = v1.clone().symmetric_eigenvalues().min();
            if asym > 1e-12 * v1.amax().max(1.0) || min_eig < -1e-12 * v1.amax().max(1.0) {
                return Err(Error::invalid("V1 must be symmetric positive semidefinite"));
            }
        }
        if need_v2 {
            let v2 = self.fixed_v2.ok_or_else(|| Error::invalid(format!("{} needs a fixed V2", self.mode)))?;
            if !(v2.is_finite() && v2 >= 0.0) {
                return Err(Error::invalid(format!("V2 must be finite and non-negative, got {v2}")));
            }
        }
        if need_adapt {
            self.adapt
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("{} needs an eta search range", self.mode)))?
                .validate()?;
        }
        Ok(())
    }
}

/// What a covariance selector sees at step `k`, before data assimilation.
#[derive(Debug)]
pub struct SelectionContext<'a> {
    pub step: usize,
    /// Holds `P_da` of the previous step.
    pub kf: &'a KfState,
    pub model: &'a StateSpaceModel,
    /// `Ŝ_k`, available from `k = 1`.
    pub residual_variance: Option<f64>,
}

/// `(V₁, V₂)` for the current step.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariances {
    pub v1: DMatrix<f64>,
    pub v2: f64,
}

/// Covariance selection used by the built-in variants.
pub fn select_covariances(variant: &AieVariant, ctx: &SelectionContext<'_>) -> Result<Covariances> {
    let n = ctx.model.state_dim();
    let zero = || DMatrix::zeros(n, n);
    let missing = |what: &str| Error::invalid(format!("{} variant is missing {what}", variant.mode));
    match variant.mode {
        AieMode::Nse => Ok(Covariances {
            v1: variant.fixed_v1.clone().ok_or_else(|| missing("V1"))?,
            v2: variant.fixed_v2.ok_or_else(|| missing("V2"))?,
        }),
        AieMode::Sse => {
            let v2 = variant.fixed_v2.ok_or_else(|| missing("V2"))?;
            let adapt = variant.adapt.as_ref().ok_or_else(|| missing("the eta range"))?;
            let v1 = match ctx.residual_variance {
                Some(s_hat) if ctx.step >= 1 => adapt_process_noise(&ctx.kf.p_da, ctx.model, s_hat, v2, adapt)?.1,
                _ => zero(),
            };
            Ok(Covariances { v1, v2 })
        }
        AieMode::Ase => {
            let adapt = variant.adapt.as_ref().ok_or_else(|| missing("the eta range"))?;
            match ctx.residual_variance {
                Some(s_hat) if ctx.step >= 1 => {
                    let a = adapt_covariances(&ctx.kf.p_da, ctx.model, s_hat, adapt)?;
                    Ok(Covariances { v1: a.v1, v2: a.v2 })
                }
                _ => Ok(Covariances { v1: zero(), v2: 0.0 }),
            }
        }
    }
}

/// Replacement covariance policy, for experiments that pin or reroute the
/// selection of a variant.
pub type Selector = Box<dyn FnMut(&SelectionContext<'_>) -> Result<Covariances> + Send>;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub step: usize,
    /// `d̂_k`, the estimate of the `q`-th derivative at step `k`.
    pub d_hat: f64,
    pub x_da: DVector<f64>,
    /// Residual `z_k`.
    pub z: f64,
    pub v1_used: DMatrix<f64>,
    pub v2_used: f64,
    pub delay_steps: usize,
}

/// Adaptive input/state estimator for one signal.
pub struct AdaptiveEstimator {
    order: DerivativeOrder,
    model: StateSpaceModel,
    variant: AieVariant,
    selector: Option<Selector>,
    rcie: RcieState,
    kf: KfState,
    step: usize,
}

impl std::fmt::Debug for AdaptiveEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdaptiveEstimator")
            .field("order", &self.order)
            .field("variant", &self.variant)
            .field("step", &self.step)
            .finish_non_exhaustive()
    }
}

impl AdaptiveEstimator {
    pub fn new(order: DerivativeOrder, sample_time_s: f64, rcie: RcieConfig, variant: AieVariant) -> Result<Self> {
        let model = StateSpaceModel::for_order(order, sample_time_s)?;
        let n = model.state_dim();
        variant.validate(n)?;
        let rcie = RcieState::new(rcie, model.b.clone(), model.c.clone())?;
        Ok(Self { order, model, variant, selector: None, rcie, kf: KfState::new(n), step: 0 })
    }

    /// Replaces the variant's covariance selection.
    pub fn with_selector(mut self, selector: Selector) -> Self {
        self.selector = Some(selector);
        self
    }

    pub fn model(&self) -> &StateSpaceModel {
        &self.model
    }

    pub fn variant(&self) -> &AieVariant {
        &self.variant
    }

    pub fn kalman(&self) -> &KfState {
        &self.kf
    }

    pub fn input_estimator(&self) -> &RcieState {
        &self.rcie
    }

    /// Processes `y_k`.
    pub fn step(&mut self, y: f64) -> Result<EstimatorOutput> {
        let k = self.step;
        let z = self.kf.residual(&self.model, y);

        let d_hat = self.rcie.step(z)?.input_estimate;

        let ctx = SelectionContext {
            step: k,
            kf: &self.kf,
            model: &self.model,
            residual_variance: self.kf.residual_variance(),
        };
        let Covariances { v1, v2 } = match self.selector.as_mut() {
            Some(select) => select(&ctx)?,
            None => select_covariances(&self.variant, &ctx)?,
        };

        self.kf.assimilate_or_hold(&self.model, z, v2)?;
        self.rcie.record_closed_loop(self.model.closed_loop(&self.kf.k_da));
        let x_da = self.kf.x_da.clone();
        self.kf.forecast(&self.model, d_hat, &v1);
        self.step += 1;

        if !d_hat.is_finite() {
            return Err(Error::Numerical(format!("input estimate diverged at step {k}")));
        }
        Ok(EstimatorOutput { step: k, d_hat, x_da, z, v1_used: v1, v2_used: v2, delay_steps: 1 })
    }

    /// Folds [`step`](Self::step) over every sample of `signal`.
    pub fn run(&mut self, signal: &SampledSignal) -> Result<Vec<EstimatorOutput>> {
        if signal.is_empty() {
            return Err(Error::invalid("cannot run an estimator on an empty signal"));
        }
        signal.values().iter().map(|&y| self.step(y)).collect()
    }
}

impl Differentiator for AdaptiveEstimator {
    fn delay_steps(&self) -> usize {
        1
    }

    fn derivative_order(&self) -> DerivativeOrder {
        self.order
    }

    fn push(&mut self, y: f64) -> Result<Option<Estimate>> {
        let out = self.step(y)?;
        Ok(Some(Estimate { step: out.step, value: out.d_hat }))
    }
}
