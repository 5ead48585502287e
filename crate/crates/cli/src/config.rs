//! Experiment configuration and its validation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use numdiff::askf::{AdaptConfig, GridScale};
use numdiff::baselines::{BackwardDifference, HgoConfig, HighGainObserver, SavitzkyGolay, SgConfig};
use numdiff::estimator::{AdaptiveEstimator, AieVariant};
use numdiff::rcie::RcieConfig;
use numdiff::signals::ManeuverProfile;
use numdiff::{DerivativeOrder, Differentiator};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    TwoTone,
    SingleTone,
    CsvInput,
    Maneuver,
}

/// Scenario parameters; unused fields are ignored by other scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    #[serde(default = "SignalConfig::default_amplitudes")]
    pub amplitudes: [f64; 2],
    /// Angular frequencies in rad/s.
    #[serde(default = "SignalConfig::default_frequencies")]
    pub frequencies: [f64; 2],
    /// Input file for `csv_input`, relative to the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub maneuver: Option<ManeuverConfig>,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            amplitudes: Self::default_amplitudes(),
            frequencies: Self::default_frequencies(),
            path: None,
            maneuver: None,
        }
    }
}

impl SignalConfig {
    fn default_amplitudes() -> [f64; 2] {
        [1.0, 1.0]
    }

    fn default_frequencies() -> [f64; 2] {
        [20.0, 30.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverConfig {
    pub offset: f64,
    pub rate: f64,
    pub displacement: f64,
    pub midpoint_s: f64,
    pub transition_s: f64,
}

impl From<ManeuverConfig> for ManeuverProfile {
    fn from(m: ManeuverConfig) -> Self {
        ManeuverProfile {
            offset: m.offset,
            rate: m.rate,
            displacement: m.displacement,
            midpoint_s: m.midpoint_s,
            transition_s: m.transition_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaSweep {
    pub eta_lower: f64,
    pub eta_upper: f64,
    pub points: usize,
    #[serde(default)]
    pub scale: GridScale,
}

impl EtaSweep {
    /// `points` values of `η` spanning `[η_L, η_U]`.
    pub fn grid(&self) -> Vec<f64> {
        let cfg = AdaptConfig {
            eta_lower: self.eta_lower,
            eta_upper: self.eta_upper,
            grid_points: self.points.saturating_sub(1),
            grid_scale: self.scale,
            alpha: 0.5,
        };
        if self.points == 1 {
            vec![self.eta_lower]
        } else {
            cfg.grid()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AieModeConfig {
    Nse,
    Sse,
    Ase,
}

/// One algorithm under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Bd {
        #[serde(default)]
        name: Option<String>,
    },
    Sg {
        #[serde(default)]
        name: Option<String>,
        half_window: usize,
        poly_degree: usize,
    },
    Hgo {
        #[serde(default)]
        name: Option<String>,
        alphas: Vec<f64>,
        epsilon: f64,
    },
    Aie {
        #[serde(default)]
        name: Option<String>,
        mode: AieModeConfig,
        n_e: usize,
        n_f: usize,
        #[serde(default = "default_one")]
        r_z: f64,
        r_d: f64,
        /// Scale of `R_θ = r_theta · I`.
        r_theta: f64,
        /// Dimension of `R_θ` as written in a reference setup; it must equal
        /// `2 n_e + 1` and is otherwise only warned about.
        #[serde(default)]
        r_theta_dim: Option<usize>,
        /// Scale of a fixed `V₁ = v1 · I` (NSE).
        #[serde(default)]
        v1: Option<f64>,
        /// Fixed sensor-noise variance (NSE, SSE).
        #[serde(default)]
        v2: Option<f64>,
        /// Fixed sensor-noise variance as a multiple of the true one.
        #[serde(default)]
        v2_factor: Option<f64>,
        #[serde(default)]
        eta_lower: Option<f64>,
        #[serde(default)]
        eta_upper: Option<f64>,
        #[serde(default)]
        grid_points: Option<usize>,
        #[serde(default)]
        grid_scale: Option<GridScale>,
        #[serde(default)]
        alpha: Option<f64>,
    },
}

fn default_one() -> f64 {
    1.0
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

impl AlgorithmSpec {
    pub fn name(&self) -> String {
        match self {
            Self::Bd { name } => name.clone().unwrap_or_else(|| "bd".into()),
            Self::Sg { name, half_window, poly_degree } => {
                name.clone().unwrap_or_else(|| format!("sg_l{half_window}_p{poly_degree}"))
            }
            Self::Hgo { name, alphas, epsilon } => {
                name.clone().unwrap_or_else(|| format!("hgo{}_eps{}", alphas.len(), fmt_num(*epsilon)))
            }
            Self::Aie { name, mode, .. } => name.clone().unwrap_or_else(|| format!("aie_{mode:?}").to_lowercase()),
        }
    }

    pub fn is_aie(&self) -> bool {
        matches!(self, Self::Aie { .. })
    }

    /// Reporting delay `δ`.
    pub fn delay_steps(&self) -> usize {
        match self {
            Self::Sg { half_window, .. } => half_window + 1,
            _ => 1,
        }
    }

    /// Parameters recorded alongside each report.
    pub fn params(&self) -> Vec<(String, String)> {
        let mut out = vec![("kind".to_string(), self.kind().to_string())];
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        match self {
            Self::Bd { .. } => {}
            Self::Sg { half_window, poly_degree, .. } => {
                push("half_window", half_window.to_string());
                push("poly_degree", poly_degree.to_string());
            }
            Self::Hgo { alphas, epsilon, .. } => {
                push("alphas", format!("{alphas:?}"));
                push("epsilon", fmt_num(*epsilon));
            }
            Self::Aie { mode, n_e, n_f, r_z, r_d, r_theta, v1, v2, v2_factor, eta_lower, eta_upper, .. } => {
                push("mode", format!("{mode:?}").to_lowercase());
                push("n_e", n_e.to_string());
                push("n_f", n_f.to_string());
                push("r_z", fmt_num(*r_z));
                push("r_d", fmt_num(*r_d));
                push("r_theta", fmt_num(*r_theta));
                for (k, v) in [
                    ("v1", v1),
                    ("v2", v2),
                    ("v2_factor", v2_factor),
                    ("eta_lower", eta_lower),
                    ("eta_upper", eta_upper),
                ] {
                    if let Some(v) = v {
                        push(k, fmt_num(*v));
                    }
                }
            }
        }
        out
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Bd { .. } => "bd",
            Self::Sg { .. } => "sg",
            Self::Hgo { .. } => "hgo",
            Self::Aie { .. } => "aie",
        }
    }

    fn adapt_config(&self) -> Option<numdiff::Result<AdaptConfig>> {
        let Self::Aie { eta_lower, eta_upper, grid_points, grid_scale, alpha, .. } = self else {
            return None;
        };
        let (lo, hi) = ((*eta_lower)?, (*eta_upper)?);
        let mut cfg = AdaptConfig {
            eta_lower: lo,
            eta_upper: hi,
            grid_points: AdaptConfig::DEFAULT_GRID_POINTS,
            grid_scale: GridScale::default(),
            alpha: 0.5,
        };
        if let Some(w) = grid_points {
            cfg.grid_points = *w;
        }
        if let Some(s) = grid_scale {
            cfg.grid_scale = *s;
        }
        if let Some(a) = alpha {
            cfg.alpha = *a;
        }
        Some(cfg.validate().map(|_| cfg))
    }

    /// Sensor-noise variance used by NSE/SSE given the true one.
    pub fn fixed_v2(&self, v2_true: f64) -> Option<f64> {
        match self {
            Self::Aie { v2: Some(v), .. } => Some(*v),
            Self::Aie { v2_factor: Some(f), .. } => Some(f * v2_true),
            _ => None,
        }
    }

    /// The same AIE spec run as NSE with `V₁ = η I`.
    pub fn as_nse(&self, eta: f64) -> Option<Self> {
        let mut s = self.clone();
        let Self::Aie { mode, v1, name, .. } = &mut s else { return None };
        *mode = AieModeConfig::Nse;
        *v1 = Some(eta);
        *name = Some(format!("nse_eta{}", fmt_num(eta)));
        Some(s)
    }

    /// The same AIE spec with another mode, sensor-noise factor and name.
    pub fn with_mode(&self, new_mode: AieModeConfig, factor: Option<f64>, new_name: &str) -> Option<Self> {
        let mut s = self.clone();
        let Self::Aie { mode, v2, v2_factor, name, .. } = &mut s else { return None };
        *mode = new_mode;
        if let Some(f) = factor {
            *v2 = None;
            *v2_factor = Some(f);
        }
        *name = Some(new_name.to_string());
        Some(s)
    }

    /// Builds the differentiator for one run.
    pub fn build(
        &self,
        order: DerivativeOrder,
        ts: f64,
        v2_true: f64,
    ) -> numdiff::Result<Box<dyn Differentiator + Send>> {
        Ok(match self {
            Self::Bd { .. } => Box::new(BackwardDifference::new(order, ts)?),
            Self::Sg { half_window, poly_degree, .. } => {
                Box::new(SavitzkyGolay::new(SgConfig::new(*half_window, *poly_degree, order)?, ts)?)
            }
            Self::Hgo { alphas, epsilon, .. } => {
                Box::new(HighGainObserver::new(&HgoConfig::new(alphas.clone(), *epsilon, ts)?, order)?)
            }
            Self::Aie { .. } => Box::new(self.build_aie(order, ts, v2_true)?),
        })
    }

    /// Builds an AIE spec as the concrete estimator, which also exposes
    /// residuals.
    pub fn build_aie(&self, order: DerivativeOrder, ts: f64, v2_true: f64) -> numdiff::Result<AdaptiveEstimator> {
        let Self::Aie { mode, n_e, n_f, r_z, r_d, r_theta, v1, .. } = self else {
            return Err(numdiff::Error::InvalidArgument(format!("{} is not an AIE algorithm", self.name())));
        };
        let rcie = RcieConfig::with_scaled_identity(*n_e, *n_f, *r_z, *r_d, *r_theta)?;
        let n = order.as_u8() as usize;
        let missing = |what: &str| numdiff::Error::InvalidArgument(format!("{} needs {what}", self.name()));
        let adapt = || self.adapt_config().ok_or_else(|| missing("eta_lower and eta_upper"))?;
        let fixed_v2 = || match self.fixed_v2(v2_true) {
            Some(v) if v.is_finite() => Ok(v),
            Some(_) => Err(missing("an explicit v2 when the true noise variance is unknown")),
            None => Err(missing("v2 or v2_factor")),
        };
        let variant = match mode {
            AieModeConfig::Nse => {
                AieVariant::nse(DMatrix::identity(n, n) * v1.ok_or_else(|| missing("v1"))?, fixed_v2()?)
            }
            AieModeConfig::Sse => AieVariant::sse(fixed_v2()?, adapt()?),
            AieModeConfig::Ase => AieVariant::ase(adapt()?),
        };
        AdaptiveEstimator::new(order, ts, rcie, variant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub derivative_order: u8,
    #[serde(default = "ExperimentConfig::default_sample_time")]
    pub sample_time_s: f64,
    #[serde(default)]
    pub snr_db_list: Vec<f64>,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub eta_sweep: Option<EtaSweep>,
    #[serde(default = "ExperimentConfig::default_seeds")]
    pub seeds: Vec<u64>,
    /// Final step; signals hold `k_f + 1` samples.
    pub k_f: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub signal: SignalConfig,
}

/// A problem found while validating a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl ExperimentConfig {
    fn default_sample_time() -> f64 {
        0.01
    }

    fn default_seeds() -> Vec<u64> {
        vec![0]
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigIssue> {
        toml::from_str(text)
            .map_err(|e| ConfigIssue { path: "<config>".into(), message: e.to_string().trim().to_string() })
    }

    /// Reads a config file; a relative `signal.path` is resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigIssue> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigIssue { path: path.display().to_string(), message: e.to_string() })?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(p), Some(dir)) = (cfg.signal.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn order(&self) -> Option<DerivativeOrder> {
        DerivativeOrder::from_u8(self.derivative_order)
    }

    /// Every problem in the config, each with its path. Warnings that do
    /// not prevent a run are returned separately.
    pub fn validate(&self) -> (Vec<ConfigIssue>, Vec<ConfigIssue>) {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        let mut err = |path: String, message: String| errors.push(ConfigIssue { path, message });
        let order = self.order();
        if order.is_none() {
            err("derivative_order".into(), format!("must be 1 or 2, got {}", self.derivative_order));
        }
        if !(self.sample_time_s.is_finite() && self.sample_time_s > 0.0) {
            err("sample_time_s".into(), format!("must be positive, got {}", self.sample_time_s));
        }
        if self.k_f < 1 {
            err("k_f".into(), "must be at least 1".into());
        }
        for (i, snr) in self.snr_db_list.iter().enumerate() {
            if snr.is_nan() || *snr == f64::NEG_INFINITY {
                err(format!("snr_db_list[{i}]"), format!("must be a number or +inf, got {snr}"));
            }
        }
        if self.seeds.is_empty() {
            err("seeds".into(), "must list at least one seed".into());
        }
        match self.scenario {
            Scenario::CsvInput if self.signal.path.is_none() => {
                err("signal.path".into(), "csv_input needs an input file".into());
            }
            Scenario::Maneuver => {
                if let Some(m) = self.signal.maneuver {
                    if !(m.transition_s.is_finite() && m.transition_s > 0.0) {
                        err("signal.maneuver.transition_s".into(), "must be positive".into());
                    }
                }
            }
            _ => {}
        }
        if self.algorithms.is_empty() {
            err("algorithms".into(), "must list at least one algorithm".into());
        }
        let mut names = BTreeSet::new();
        for (i, alg) in self.algorithms.iter().enumerate() {
            let path = format!("algorithms[{i}]");
            if !names.insert(alg.name()) {
                err(format!("{path}.name"), format!("duplicate algorithm name {:?}", alg.name()));
            }
            if let Some(order) = order {
                for issue in validate_algorithm(alg, order, self.sample_time_s, self.scenario) {
                    err(format!("{path}.{}", issue.path), issue.message);
                }
            }
            if let AlgorithmSpec::Aie { n_e, r_theta_dim: Some(dim), .. } = alg {
                if *dim != 2 * n_e + 1 {
                    warnings.push(ConfigIssue {
                        path: format!("{path}.r_theta_dim"),
                        message: format!(
                            "R_theta is {dim}x{dim} but n_e = {n_e} needs {0}x{0}; using {0}",
                            2 * n_e + 1
                        ),
                    });
                }
            }
        }
        if let Some(sweep) = &self.eta_sweep {
            if sweep.points < 1 {
                err("eta_sweep.points".into(), "must be at least 1".into());
            }
            let probe = AdaptConfig {
                eta_lower: sweep.eta_lower,
                eta_upper: sweep.eta_upper,
                grid_points: sweep.points.max(2) - 1,
                grid_scale: sweep.scale,
                alpha: 0.5,
            };
            if sweep.points == 1 {
                if !(sweep.eta_lower.is_finite() && sweep.eta_lower >= 0.0) {
                    err(
                        "eta_sweep.eta_lower".into(),
                        format!("must be finite and non-negative, got {}", sweep.eta_lower),
                    );
                }
            } else if let Err(e) = probe.validate() {
                err("eta_sweep".into(), e.to_string());
            }
        }
        (errors, warnings)
    }
}

fn validate_algorithm(alg: &AlgorithmSpec, order: DerivativeOrder, ts: f64, scenario: Scenario) -> Vec<ConfigIssue> {
    let mut out = Vec::new();
    let mut err = |path: &str, message: String| out.push(ConfigIssue { path: path.into(), message });
    let ts = if ts.is_finite() && ts > 0.0 { ts } else { 0.01 };
    match alg {
        AlgorithmSpec::Bd { .. } => {}
        AlgorithmSpec::Sg { half_window, poly_degree, .. } => {
            if let Err(e) = SgConfig::new(*half_window, *poly_degree, order) {
                err("poly_degree", e.to_string());
            }
        }
        AlgorithmSpec::Hgo { alphas, epsilon, .. } => match HgoConfig::new(alphas.clone(), *epsilon, ts) {
            Ok(cfg) => {
                if let Err(e) = HighGainObserver::new(&cfg, order) {
                    err("alphas", e.to_string());
                }
            }
            Err(e) => err(if epsilon.is_finite() && *epsilon > 0.0 { "alphas" } else { "epsilon" }, e.to_string()),
        },
        AlgorithmSpec::Aie { mode, n_e, n_f, r_z, r_d, r_theta, v1, v2, v2_factor, .. } => {
            if let Err(e) = RcieConfig::with_scaled_identity(*n_e, *n_f, *r_z, *r_d, *r_theta) {
                err("rcie", e.to_string());
            }
            if v2.is_some() && v2_factor.is_some() {
                err("v2", "give either v2 or v2_factor, not both".into());
            }
            for (field, value) in [("v1", v1), ("v2", v2), ("v2_factor", v2_factor)] {
                if let Some(v) = value {
                    if !(v.is_finite() && *v >= 0.0) {
                        err(field, format!("must be finite and non-negative, got {v}"));
                    }
                }
            }
            let needs_v2 = matches!(mode, AieModeConfig::Nse | AieModeConfig::Sse);
            if needs_v2 && v2.is_none() && v2_factor.is_none() {
                err("v2", format!("{mode:?} needs v2 or v2_factor").to_lowercase());
            }
            if needs_v2 && v2_factor.is_some() && scenario == Scenario::CsvInput {
                err("v2_factor", "the true sensor-noise variance is unknown for csv_input; use v2".into());
            }
            if *mode == AieModeConfig::Nse && v1.is_none() {
                err("v1", "nse needs v1".into());
            }
            if matches!(mode, AieModeConfig::Sse | AieModeConfig::Ase) {
                match alg.adapt_config() {
                    None => err("eta_lower", "adaptive modes need eta_lower and eta_upper".into()),
                    Some(Err(e)) => err("eta_lower", e.to_string()),
                    Some(Ok(_)) => {}
                }
            }
        }
    }
    out
}
