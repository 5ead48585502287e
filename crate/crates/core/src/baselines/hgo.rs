use nalgebra::{DMatrix, DVector};

use crate::{DerivativeOrder, Differentiator, Error, Estimate, Result};

/// Gains of an `r`-th order high-gain observer.
///
/// `s^r + α₁ s^{r−1} + … + α_r` must be Hurwitz; this is checked on
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HgoConfig {
    alphas: Vec<f64>,
    epsilon: f64,
    sample_time_s: f64,
}

impl HgoConfig {
    pub fn new(alphas: Vec<f64>, epsilon: f64, sample_time_s: f64) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(Error::invalid(format!("observer order must be at least 2, got {}", alphas.len())));
        }
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("observer gains must be finite"));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(sample_time_s.is_finite() && sample_time_s > 0.0) {
            return Err(Error::invalid(format!("sample time must be positive, got {sample_time_s}")));
        }
        if !is_hurwitz(&alphas) {
            return Err(Error::invalid(format!(
                "characteristic polynomial with coefficients {alphas:?} is not Hurwitz"
            )));
        }
        Ok(Self { alphas, epsilon, sample_time_s })
    }

    pub fn order(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sample_time_s(&self) -> f64 {
        self.sample_time_s
    }

    /// Observer injection gain `H = [α₁/ε, α₂/ε², …, α_r/ε^r]ᵀ`.
    pub fn gain(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.order(),
            self.alphas.iter().enumerate().map(|(i, a)| a / self.epsilon.powi(i as i32 + 1)),
        )
    }

    /// Continuous-time observer matrix: a shift matrix minus `H e₁ᵀ`.
    pub fn continuous_matrix(&self) -> DMatrix<f64> {
        let r = self.order();
        let h = self.gain();
        DMatrix::from_fn(r, r, |i, j| {
            let shift = if j == i + 1 { 1.0 } else { 0.0 };
            let inject = if j == 0 { h[i] } else { 0.0 };
            shift - inject
        })
    }
}

/// Companion-matrix root test.
fn is_hurwitz(alphas: &[f64]) -> bool {
    let r = alphas.len();
    let companion = DMatrix::from_fn(r, r, |i, j| {
        if i == 0 {
            -alphas[j]
        } else if j + 1 == i {
            1.0
        } else {
            0.0
        }
    });
    companion.complex_eigenvalues().iter().all(|z| z.re < 0.0)
}

/// Bilinear-discretized observer `x̂_{k+1} = A_do x̂_k + B_do y_k`,
/// `ŷ_k = C_o x̂_k`.
#[derive(Debug, Clone)]
pub struct HgoState {
    pub a_do: DMatrix<f64>,
    pub b_do: DVector<f64>,
    pub c_o: DMatrix<f64>,
    pub x_hat: DVector<f64>,
}

impl HgoState {
    /// Builds the discrete observer from zero initial state.
    pub fn new(config: &HgoConfig) -> Result<Self> {
        let r = config.order();
        let ts = config.sample_time_s;
        let a_co = config.continuous_matrix();
        let eye = DMatrix::<f64>::identity(r, r);
        let lhs = &eye - &a_co * (0.5 * ts);
        let inv = lhs.try_inverse().ok_or_else(|| Error::Numerical("I - (T_s/2) A_co is singular".into()))?;
        let a_do = &inv * (&eye + &a_co * (0.5 * ts));
        let b_do = &inv * config.gain() * ts;
        let c_o = DMatrix::from_fn(r - 1, r, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
        Ok(Self { a_do, b_do, c_o, x_hat: DVector::zeros(r) })
    }

    /// Returns `ŷ_k = C_o x̂_k` (estimates of `y^{(1)} … y^{(r−1)}`) and
    /// advances the observer with `y_k`.
    pub fn step(&mut self, y: f64) -> DVector<f64> {
        let estimates = &self.c_o * &self.x_hat;
        self.x_hat = &self.a_do * &self.x_hat + &self.b_do * y;
        estimates
    }

    pub fn spectral_radius(&self) -> f64 {
        self.a_do.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Streaming wrapper reporting one derivative order from a [`HgoState`].
#[derive(Debug, Clone)]
pub struct HighGainObserver {
    state: HgoState,
    order: DerivativeOrder,
    step: usize,
}

impl HighGainObserver {
    pub fn new(config: &HgoConfig, order: DerivativeOrder) -> Result<Self> {
        if order.as_u8() as usize > config.order() - 1 {
            return Err(Error::invalid(format!(
                "an order-{} observer cannot estimate derivative {order}",
                config.order()
            )));
        }
        Ok(Self { state: HgoState::new(config)?, order, step: 0 })
    }

    pub fn state(&self) -> &HgoState {
        &self.state
    }
}

impl Differentiator for HighGainObserver {
    fn delay_steps(&self) -> usize {
        1
    }

    fn derivative_order(&self) -> DerivativeOrder {
        self.order
    }

    fn push(&mut self, y: f64) -> Result<Option<Estimate>> {
        let estimates = self.state.step(y);
        let step = self.step;
        self.step += 1;
        Ok(Some(Estimate { step, value: estimates[self.order.as_u8() as usize - 1] }))
    }
}
