#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use numdiff::askf::StateSpaceModel;
use numdiff::rcie::{RcieConfig, RcieState, RlsTerms};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub config: RcieConfig,
    pub model: StateSpaceModel,
    pub residuals: Vec<f64>,
    pub gains: Vec<DVector<f64>>,
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
    &m * m.transpose() + DMatrix::identity(n, n) * rng.random_range(0.05..2.0)
}

pub fn random_instance(rng: &mut ChaCha8Rng, steps: usize) -> Instance {
    let n_e = rng.random_range(1..=2);
    let n_f = rng.random_range(1..=3);
    let len = 2 * n_e + 1;
    let r_theta = random_spd(rng, len);
    let theta_0 = DVector::from_fn(len, |_, _| rng.random_range(-0.5..0.5));
    let config =
        RcieConfig::new(n_e, n_f, rng.random_range(0.5..2.0), rng.random_range(1e-3..1e-1), r_theta, theta_0).unwrap();
    let ts = rng.random_range(0.01..0.5);
    let model = if rng.random_bool(0.5) {
        StateSpaceModel::single_integrator(ts)
    } else {
        StateSpaceModel::double_integrator(ts)
    };
    let n = model.state_dim();
    let residuals = (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect();
    let gains = (0..steps).map(|_| DVector::from_fn(n, |_, _| rng.random_range(-0.9..0.0))).collect();
    Instance { config, model, residuals, gains }
}

/// Runs the recursive estimator, returning `θ_{k+1}` and the RLS terms per
/// step along with each step's regressor.
/// Per step: regressor, parameters, RLS terms and covariance.
pub type Trace = (DVector<f64>, DVector<f64>, Option<RlsTerms>, DMatrix<f64>);

pub fn run(inst: &Instance) -> Vec<Trace> {
    let mut st = RcieState::new(inst.config.clone(), inst.model.b.clone(), inst.model.c.clone()).unwrap();
    let mut out = Vec::new();
    for (z, gain) in inst.residuals.iter().zip(&inst.gains) {
        let s = st.step(*z).unwrap();
        st.record_closed_loop(inst.model.closed_loop(gain));
        out.push((st.theta().clone(), s.regressor, s.update, st.covariance().clone()));
    }
    out
}

/// Dense minimizer of
/// `Σ R_z (z_i − d̂_{f,i} + Φ_{f,i} θ)² + R_d (Φ_i θ)² + (θ − θ₀)ᵀ R_θ (θ − θ₀)`
/// over the updated steps.
pub fn batch_minimizer(cfg: &RcieConfig, terms: &[(DVector<f64>, RlsTerms)]) -> DVector<f64> {
    let mut normal = cfg.r_theta().clone();
    let mut rhs = cfg.r_theta() * cfg.theta_0();
    for (phi, t) in terms {
        let f = &t.filtered_regressor;
        normal += f * f.transpose() * cfg.r_z() + phi * phi.transpose() * cfg.r_d();
        rhs -= f * (cfg.r_z() * (t.residual - t.filtered_input));
    }
    normal.lu().solve(&rhs).unwrap()
}

/// Largest relative deviation of the recursive `θ` from the batch
/// minimizer over `instances` random problems of `steps` steps.
pub fn rls_batch_max_error(seed: u64, instances: usize, steps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, steps);
        let mut terms = Vec::new();
        for (theta, phi, update, _) in run(&inst) {
            if let Some(t) = update {
                terms.push((phi, t));
            }
            let expected =
                if terms.is_empty() { inst.config.theta_0().clone() } else { batch_minimizer(&inst.config, &terms) };
            worst = worst.max((theta - &expected).norm() / expected.norm().max(1e-12));
        }
    }
    worst
}

use numdiff::baselines::{sg_estimate, sg_estimate_about, HgoConfig, HighGainObserver, SgConfig};
use numdiff::{estimate_series, DerivativeOrder};

/// Random polynomial coefficients `c_0 … c_p`.
fn random_poly(rng: &mut ChaCha8Rng, degree: usize) -> Vec<f64> {
    (0..=degree).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn poly_derivative(coeffs: &[f64], q: usize, t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(q)
        .map(|(i, c)| c * ((i - q + 1)..=i).product::<usize>() as f64 * t.powi((i - q) as i32))
        .sum()
}

struct SgCase {
    config: SgConfig,
    ts: f64,
    center: f64,
    coeffs: Vec<f64>,
    window: Vec<f64>,
}

fn random_sg_case(rng: &mut ChaCha8Rng) -> SgCase {
    let l = rng.random_range(1..=4usize);
    let q = rng.random_range(1..=2usize);
    let p = rng.random_range(q..=2 * l);
    let order = DerivativeOrder::from_u8(q as u8).unwrap();
    let config = SgConfig::new(l, p, order).unwrap();
    let ts = rng.random_range(0.05..0.5);
    let center = rng.random_range(-1.0..1.0);
    let degree = rng.random_range(0..=p);
    let coeffs = random_poly(rng, degree);
    let window = (0..2 * l + 1).map(|j| poly_derivative(&coeffs, 0, center + (j as f64 - l as f64) * ts)).collect();
    SgCase { config, ts, center, coeffs, window }
}

/// Worst relative error of SG derivative estimates of random polynomials
/// with degree at most the fit degree.
pub fn sg_exactness_max_error(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let c = random_sg_case(&mut rng);
        let q = c.config.derivative_order().as_u8() as usize;
        let exact = poly_derivative(&c.coeffs, q, c.center);
        let scale = exact.abs().max(c.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for est in [
            sg_estimate(&c.window, &c.config, c.ts).unwrap(),
            sg_estimate_about(&c.window, c.center, &c.config, c.ts).unwrap(),
        ] {
            worst = worst.max((est - exact).abs() / scale);
        }
    }
    worst
}

/// Worst relative change of the SG estimate when the same samples are
/// placed at a shifted time origin.
pub fn sg_translation_max_error(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let c = random_sg_case(&mut rng);
        let window: Vec<f64> = c.window.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let base = sg_estimate(&window, &c.config, c.ts).unwrap();
        let shifted = sg_estimate_about(&window, c.center, &c.config, c.ts).unwrap();
        worst = worst.max((shifted - base).abs() / base.abs().max(1.0));
    }
    worst
}

/// RMS first-derivative error of an HGO on `sin(ωt)` after the transient,
/// comparing each estimate with the truth at the same step.
pub fn hgo_steady_rmse(alphas: &[f64], eps: f64, omega: f64, ts: f64) -> f64 {
    let cfg = HgoConfig::new(alphas.to_vec(), eps, ts).unwrap();
    let mut obs = HighGainObserver::new(&cfg, DerivativeOrder::First).unwrap();
    let n = (20.0 / ts) as usize;
    let y: Vec<f64> = (0..n).map(|k| (omega * k as f64 * ts).sin()).collect();
    let est = estimate_series(&mut obs, &y).unwrap();
    let start = n / 2;
    let sq: f64 = (start..n).map(|k| (est[k] - omega * (omega * k as f64 * ts).cos()).powi(2)).sum();
    (sq / (n - start) as f64).sqrt()
}

use numdiff::askf::{adapt_covariances, AdaptConfig};
use numdiff::estimator::{AdaptiveEstimator, AieVariant};
use numdiff::metrics::{delay_floor, relative_rmse};
use numdiff::signals::{add_noise, generate_two_tone, NoiseSpec};

/// Worst gap between `ρ_{k_f}` of exact delayed truth and the delay floor
/// on `20 cos(0.2k)`, together with the floors for `δ = 1` and `δ = 3`.
pub fn delay_floor_check() -> (f64, f64, f64) {
    let s = generate_two_tone(1.0, 20.0, 0.0, 0.0, 0.01, 2001).unwrap();
    let truth = s.truth(DerivativeOrder::First).unwrap();
    let k_f = truth.len() - 1;
    let mut worst = 0.0f64;
    let mut floors = [0.0; 4];
    for d in 1..=3usize {
        let rho = relative_rmse(truth, truth, d).unwrap().last().unwrap().unwrap();
        floors[d] = delay_floor(truth, d, k_f).unwrap();
        // direct evaluation of the definition
        let num: f64 = (d..=k_f).map(|i| (truth[i] - truth[i - d]).powi(2)).sum();
        let den: f64 = (d..=k_f).map(|i| truth[i - d].powi(2)).sum();
        let direct = (num / den).sqrt();
        worst = worst.max((rho - floors[d]).abs()).max((direct - floors[d]).abs());
    }
    (worst, floors[1], floors[3])
}

/// Hand-enumerated adaptation cases; returns the first mismatch.
pub fn adaptation_grid_cases() -> std::result::Result<(), String> {
    use numdiff::askf::{AdaptCase, GridScale, StateSpaceModel};
    let scalar = StateSpaceModel {
        a: DMatrix::from_element(1, 1, 1.0),
        b: DVector::from_element(1, 1.0),
        c: DMatrix::from_element(1, 1, 1.0),
    };
    let linear = |lo: f64, hi: f64, w: usize, alpha: f64| AdaptConfig {
        eta_lower: lo,
        eta_upper: hi,
        grid_points: w,
        grid_scale: GridScale::Linear,
        alpha,
    };
    let zero = DMatrix::zeros(1, 1);
    let a = adapt_covariances(&zero, &scalar, 1.0, &linear(0.25, 0.75, 2, 0.5)).map_err(|e| e.to_string())?;
    if a.case != AdaptCase::Matched || a.eta != 0.5 || a.v2 != 0.5 || a.v1[(0, 0)] != 0.5 {
        return Err(format!("grid {{0.25, 0.5, 0.75}}, S=1: got {a:?}"));
    }
    let b = adapt_covariances(&zero, &scalar, 0.0, &linear(0.1, 1.0, 9, 0.5)).map_err(|e| e.to_string())?;
    if b.case != AdaptCase::Saturated || b.v2 != 0.0 || (b.eta - 0.1).abs() > 1e-15 {
        return Err(format!("S=0: got {b:?}"));
    }
    let c = adapt_covariances(&zero, &scalar, 0.6, &linear(0.25, 0.75, 2, 1.0)).map_err(|e| e.to_string())?;
    if c.eta != 0.5 || (c.v2 - 0.1).abs() > 1e-15 {
        return Err(format!("alpha=1: got {c:?}"));
    }
    Ok(())
}

/// Largest deviation of `J_f(η)` from the affine law `J_f(0) − η C Cᵀ`.
pub fn forecast_mismatch_affinity_error() -> f64 {
    use numdiff::askf::{forecast_mismatch, StateSpaceModel};
    let m = StateSpaceModel::double_integrator(0.01);
    let p_da = DMatrix::from_row_slice(2, 2, &[0.3, 0.05, 0.05, 0.2]);
    let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.02).collect();
    let j = forecast_mismatch(&p_da, &m, 0.7, &grid);
    let slope = -m.output_gain();
    grid.iter().zip(&j).map(|(eta, v)| (v - (j[0] + slope * eta)).abs()).fold(0.0, f64::max)
}

/// Smallest eigenvalue of `P_f` and `P_da` seen over `steps` ASE steps on
/// the two-tone signal at 20 dB, relative to the largest.
pub fn min_covariance_eigenvalue(steps: usize, seed: u64) -> f64 {
    let clean = generate_two_tone(1.0, 20.0, 1.0, 30.0, 0.01, steps).unwrap();
    let noisy = add_noise(&clean, &NoiseSpec::new(20.0, seed)).unwrap();
    let rc = numdiff::rcie::RcieConfig::with_scaled_identity(12, 25, 1.0, 1e-5, 0.1).unwrap();
    let mut est =
        AdaptiveEstimator::new(DerivativeOrder::First, 0.01, rc, AieVariant::ase(AdaptConfig::new(1e-6, 1e2).unwrap()))
            .unwrap();
    let mut worst = f64::INFINITY;
    for &y in noisy.values() {
        est.step(y).unwrap();
        for p in [&est.kalman().p_f, &est.kalman().p_da] {
            let eig = p.clone().symmetric_eigenvalues();
            worst = worst.min(eig.min() / eig.max().abs().max(1e-300));
        }
    }
    worst
}

pub fn section6_single(variant: AieVariant) -> AdaptiveEstimator {
    let rc = numdiff::rcie::RcieConfig::with_scaled_identity(12, 25, 1.0, 1e-5, 0.1).unwrap();
    AdaptiveEstimator::new(DerivativeOrder::First, 0.01, rc, variant).unwrap()
}

pub fn all_variants(v2: f64) -> Vec<AieVariant> {
    let adapt = AdaptConfig::new(1e-6, 1e2).unwrap();
    vec![AieVariant::nse(DMatrix::from_element(1, 1, 1e-6), v2), AieVariant::sse(v2, adapt), AieVariant::ase(adapt)]
}

/// Number of trials (out of `trials`) where perturbing samples after a
/// random step `k` changed any output at or before `k`.
pub fn causality_violations(trials: usize, seed: u64) -> usize {
    let n = 300;
    let clean = generate_two_tone(1.0, 20.0, 1.0, 30.0, 0.01, n).unwrap();
    let y = add_noise(&clean, &NoiseSpec::new(20.0, seed)).unwrap().values().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    let variants = all_variants(0.01);
    for t in 0..trials {
        let k = rng.random_range(0..n - 1);
        let mut perturbed = y.clone();
        for v in &mut perturbed[k + 1..] {
            *v += rng.random_range(-5.0..5.0);
        }
        let variant = variants[t % variants.len()].clone();
        let a: Vec<_> = {
            let mut e = section6_single(variant.clone());
            y.iter().map(|v| e.step(*v).unwrap()).collect()
        };
        let b: Vec<_> = {
            let mut e = section6_single(variant);
            perturbed.iter().map(|v| e.step(*v).unwrap()).collect()
        };
        if a[..=k] != b[..=k] {
            bad += 1;
        }
    }
    bad
}
