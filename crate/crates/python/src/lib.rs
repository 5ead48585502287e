use nalgebra::DMatrix;
use numdiff::askf::{AdaptConfig, GridScale};
use numdiff::baselines::{BackwardDifference, HgoConfig, HighGainObserver, SavitzkyGolay, SgConfig};
use numdiff::estimator::{AdaptiveEstimator, AieVariant};
use numdiff::rcie::RcieConfig;
use numdiff::signals::{self, ManeuverProfile, NoiseSpec};
use numdiff::{DerivativeOrder, Differentiator};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: numdiff::Error) -> PyErr {
    match e {
        numdiff::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn order(q: u8) -> PyResult<DerivativeOrder> {
    DerivativeOrder::from_u8(q)
        .ok_or_else(|| PyValueError::new_err(format!("derivative order must be 1 or 2, got {q}")))
}

/// Uniformly sampled signal with optional analytic derivatives.
#[pyclass(name = "SampledSignal", module = "numdiff_py")]
pub struct PySignal {
    inner: signals::SampledSignal,
}

#[pymethods]
impl PySignal {
    #[new]
    #[pyo3(signature = (sample_time_s, values, first=None, second=None))]
    fn new(sample_time_s: f64, values: Vec<f64>, first: Option<Vec<f64>>, second: Option<Vec<f64>>) -> PyResult<Self> {
        let mut s = signals::SampledSignal::new(sample_time_s, values).map_err(to_py)?;
        if let Some(d) = first {
            s = s.with_truth(DerivativeOrder::First, d).map_err(to_py)?;
        }
        if let Some(d) = second {
            s = s.with_truth(DerivativeOrder::Second, d).map_err(to_py)?;
        }
        Ok(Self { inner: s })
    }

    /// `a1 sin(f1 t) + a2 sin(f2 t)` with `num_steps` samples.
    #[staticmethod]
    fn two_tone(a1: f64, f1: f64, a2: f64, f2: f64, sample_time_s: f64, num_steps: usize) -> PyResult<Self> {
        let inner = signals::generate_two_tone(a1, f1, a2, f2, sample_time_s, num_steps).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Lane-change trajectory; omitted profile fields use the defaults.
    #[staticmethod]
    #[pyo3(signature = (duration_s, sample_time_s, offset=None, rate=None, displacement=None, midpoint_s=None, transition_s=None))]
    fn maneuver(
        duration_s: f64,
        sample_time_s: f64,
        offset: Option<f64>,
        rate: Option<f64>,
        displacement: Option<f64>,
        midpoint_s: Option<f64>,
        transition_s: Option<f64>,
    ) -> PyResult<Self> {
        let d = ManeuverProfile::default();
        let profile = ManeuverProfile {
            offset: offset.unwrap_or(d.offset),
            rate: rate.unwrap_or(d.rate),
            displacement: displacement.unwrap_or(d.displacement),
            midpoint_s: midpoint_s.unwrap_or(d.midpoint_s),
            transition_s: transition_s.unwrap_or(d.transition_s),
        };
        let inner = signals::generate_maneuver_trajectory(duration_s, sample_time_s, &profile).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        Ok(Self { inner: signals::read_csv(path).map_err(to_py)? })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        signals::write_csv(&self.inner, path).map_err(to_py)
    }

    /// Copy with Gaussian noise at the given SNR.
    fn with_noise(&self, snr_db: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: signals::add_noise(&self.inner, &NoiseSpec::new(snr_db, seed)).map_err(to_py)? })
    }

    /// Variance of the noise `with_noise` adds at this SNR.
    fn noise_variance(&self, snr_db: f64) -> PyResult<f64> {
        NoiseSpec::new(snr_db, 0).variance_for(self.inner.rms()).map_err(to_py)
    }

    #[getter]
    fn sample_time_s(&self) -> f64 {
        self.inner.sample_time_s()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn times(&self) -> Vec<f64> {
        self.inner.times().collect()
    }

    fn truth(&self, q: u8) -> PyResult<Option<Vec<f64>>> {
        Ok(self.inner.truth(order(q)?).map(<[f64]>::to_vec))
    }

    fn rms(&self) -> f64 {
        self.inner.rms()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("SampledSignal(len={}, sample_time_s={})", self.inner.len(), self.inner.sample_time_s())
    }
}

/// Streaming differentiator: backward difference, Savitzky-Golay or
/// high-gain observer.
#[pyclass(name = "Differentiator", module = "numdiff_py", unsendable)]
pub struct PyDifferentiator {
    inner: Box<dyn Differentiator + Send>,
}

#[pymethods]
impl PyDifferentiator {
    #[staticmethod]
    #[pyo3(signature = (sample_time_s, order=1))]
    fn backward_difference(sample_time_s: f64, order: u8) -> PyResult<Self> {
        let inner = BackwardDifference::new(self::order(order)?, sample_time_s).map_err(to_py)?;
        Ok(Self { inner: Box::new(inner) })
    }

    #[staticmethod]
    #[pyo3(signature = (sample_time_s, half_window, poly_degree, order=1))]
    fn savitzky_golay(sample_time_s: f64, half_window: usize, poly_degree: usize, order: u8) -> PyResult<Self> {
        let cfg = SgConfig::new(half_window, poly_degree, self::order(order)?).map_err(to_py)?;
        Ok(Self { inner: Box::new(SavitzkyGolay::new(cfg, sample_time_s).map_err(to_py)?) })
    }

    #[staticmethod]
    #[pyo3(signature = (sample_time_s, alphas, epsilon, order=1))]
    fn high_gain_observer(sample_time_s: f64, alphas: Vec<f64>, epsilon: f64, order: u8) -> PyResult<Self> {
        let cfg = HgoConfig::new(alphas, epsilon, sample_time_s).map_err(to_py)?;
        Ok(Self { inner: Box::new(HighGainObserver::new(&cfg, self::order(order)?).map_err(to_py)?) })
    }

    #[getter]
    fn delay_steps(&self) -> usize {
        self.inner.delay_steps()
    }

    /// Feeds one sample; returns `(step, estimate)` when one is emitted.
    fn push(&mut self, y: f64) -> PyResult<Option<(usize, f64)>> {
        Ok(self.inner.push(y).map_err(to_py)?.map(|e| (e.step, e.value)))
    }

    /// Feeds all samples; entry `k` estimates step `k`, `None` if never emitted.
    fn run(&mut self, values: Vec<f64>) -> PyResult<Vec<Option<f64>>> {
        numdiff::sparse_estimate_series(self.inner.as_mut(), &values).map_err(to_py)
    }
}

/// Adaptive input and state estimator.
///
/// `mode` is "nse" (needs `v1`, `v2`), "sse" (needs `v2`, eta bounds) or
/// "ase" (needs eta bounds).
#[pyclass(name = "AdaptiveEstimator", module = "numdiff_py", unsendable)]
pub struct PyAdaptiveEstimator {
    inner: AdaptiveEstimator,
}

#[pymethods]
impl PyAdaptiveEstimator {
    #[new]
    #[pyo3(signature = (
        sample_time_s, mode, n_e, n_f, r_d, r_theta, order=1, r_z=1.0, v1=None, v2=None,
        eta_lower=None, eta_upper=None, grid_points=AdaptConfig::DEFAULT_GRID_POINTS,
        grid_scale="logarithmic", alpha=AdaptConfig::DEFAULT_ALPHA
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        sample_time_s: f64,
        mode: &str,
        n_e: usize,
        n_f: usize,
        r_d: f64,
        r_theta: f64,
        order: u8,
        r_z: f64,
        v1: Option<f64>,
        v2: Option<f64>,
        eta_lower: Option<f64>,
        eta_upper: Option<f64>,
        grid_points: usize,
        grid_scale: &str,
        alpha: f64,
    ) -> PyResult<Self> {
        let q = self::order(order)?;
        let rcie = RcieConfig::with_scaled_identity(n_e, n_f, r_z, r_d, r_theta).map_err(to_py)?;
        let need =
            |v: Option<f64>, what: &str| v.ok_or_else(|| PyValueError::new_err(format!("mode {mode:?} needs {what}")));
        let adapt = || -> PyResult<AdaptConfig> {
            let grid_scale = match grid_scale {
                "linear" => GridScale::Linear,
                "logarithmic" => GridScale::Logarithmic,
                s => return Err(PyValueError::new_err(format!("unknown grid scale {s:?}"))),
            };
            let cfg = AdaptConfig {
                eta_lower: need(eta_lower, "eta_lower")?,
                eta_upper: need(eta_upper, "eta_upper")?,
                grid_points,
                grid_scale,
                alpha,
            };
            cfg.validate().map_err(to_py)?;
            Ok(cfg)
        };
        let n = q.as_u8() as usize;
        let variant = match mode {
            "nse" => AieVariant::nse(DMatrix::identity(n, n) * need(v1, "v1")?, need(v2, "v2")?),
            "sse" => AieVariant::sse(need(v2, "v2")?, adapt()?),
            "ase" => AieVariant::ase(adapt()?),
            m => return Err(PyValueError::new_err(format!("unknown mode {m:?}"))),
        };
        Ok(Self { inner: AdaptiveEstimator::new(q, sample_time_s, rcie, variant).map_err(to_py)? })
    }

    /// Feeds one sample; returns `(d_hat, z, v2_used)`.
    fn step(&mut self, y: f64) -> PyResult<(f64, f64, f64)> {
        let o = self.inner.step(y).map_err(to_py)?;
        Ok((o.d_hat, o.z, o.v2_used))
    }

    /// Feeds all samples; returns the estimates and the residuals.
    fn run(&mut self, values: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let mut d = Vec::with_capacity(values.len());
        let mut z = Vec::with_capacity(values.len());
        for y in values {
            let o = self.inner.step(y).map_err(to_py)?;
            d.push(o.d_hat);
            z.push(o.z);
        }
        Ok((d, z))
    }
}

/// `rho_k` for `k = delay + burn_in, ...`; `None` while undefined.
#[pyfunction]
#[pyo3(signature = (truth, estimates, delay, burn_in=0))]
fn relative_rmse(truth: Vec<f64>, estimates: Vec<f64>, delay: usize, burn_in: usize) -> PyResult<Vec<Option<f64>>> {
    numdiff::metrics::relative_rmse_with_burn_in(&truth, &estimates, delay, burn_in).map_err(to_py)
}

/// Error of the exact derivative delayed by `delay` steps, at `k_final`.
#[pyfunction]
fn delay_floor(truth: Vec<f64>, delay: usize, k_final: usize) -> PyResult<f64> {
    numdiff::metrics::delay_floor(&truth, delay, k_final).map_err(to_py)
}

#[pymodule]
fn numdiff_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySignal>()?;
    m.add_class::<PyDifferentiator>()?;
    m.add_class::<PyAdaptiveEstimator>()?;
    m.add_function(wrap_pyfunction!(relative_rmse, m)?)?;
    m.add_function(wrap_pyfunction!(delay_floor, m)?)?;
    Ok(())
}
