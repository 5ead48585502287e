mod common;

use nalgebra::DMatrix;
use numdiff::askf::*;

#[test]
fn hand_enumerated_grids() {
    common::adaptation_grid_cases().unwrap();
}

#[test]
fn forecast_mismatch_is_affine_in_eta() {
    let err = common::forecast_mismatch_affinity_error();
    assert!(err <= 1e-10, "{err:e}");
}

#[test]
fn covariances_stay_positive_semidefinite() {
    let worst = common::min_covariance_eigenvalue(10_000, 5);
    assert!(worst >= -1e-12, "{worst:e}");
}

#[test]
fn matched_case_zeroes_the_metric() {
    let m = StateSpaceModel::single_integrator(0.01);
    let p_da = DMatrix::from_element(1, 1, 0.02);
    let cfg = AdaptConfig { grid_points: 1000, ..AdaptConfig::new(1e-6, 1.0).unwrap() };
    let a = adapt_covariances(&p_da, &m, 0.3, &cfg).unwrap();
    assert_eq!(a.case, AdaptCase::Matched);
    assert!(a.v2 > 0.0);
    let p_f = &m.a * &p_da * m.a.transpose() + &a.v1;
    assert!(adaptation_metric(0.3, &p_f, &m, a.v2).abs() < 1e-12);
}

#[test]
fn process_noise_targets_the_given_sensor_variance() {
    let m = StateSpaceModel::single_integrator(0.01);
    let p_da = DMatrix::zeros(1, 1);
    let cfg =
        AdaptConfig { eta_lower: 0.0, eta_upper: 1.0, grid_points: 100, grid_scale: GridScale::Linear, alpha: 0.5 };
    let (eta, v1) = adapt_process_noise(&p_da, &m, 0.5, 0.2, &cfg).unwrap();
    assert!((eta - 0.3).abs() < 1e-12);
    assert_eq!(v1[(0, 0)], eta);
}

#[test]
fn residual_statistics_match_batch_formulas() {
    let m = StateSpaceModel::single_integrator(0.1);
    let mut kf = KfState::new(1);
    let ys: Vec<f64> = (0..200).map(|k| (0.37 * k as f64).sin() * 3.0 + 0.01 * k as f64).collect();
    let mut zs = Vec::new();
    for (k, y) in ys.iter().enumerate() {
        zs.push(kf.residual(&m, *y));
        kf.assimilate_or_hold(&m, zs[k], 0.1).unwrap();
        kf.forecast(&m, 0.5, &DMatrix::from_element(1, 1, 0.01));
        let n = zs.len() as f64;
        let mean = zs.iter().sum::<f64>() / n;
        if k == 0 {
            assert_eq!(kf.residual_variance(), None);
        } else {
            let batch = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let got = kf.residual_variance().unwrap();
            assert!((got - batch).abs() <= 1e-12 * batch.max(1.0), "{got} vs {batch}");
        }
    }
}

#[test]
fn gain_vanishes_as_sensor_noise_grows() {
    let m = StateSpaceModel::single_integrator(0.1);
    let mut prev = f64::INFINITY;
    for v2 in [1.0, 10.0, 100.0] {
        let mut kf = KfState::new(1);
        kf.forecast(&m, 0.0, &DMatrix::from_element(1, 1, 1.0));
        kf.assimilate(&m, 0.0, v2).unwrap();
        let g = kf.k_da[0].abs();
        assert!(g < prev);
        prev = g;
    }
    assert!(prev < 0.01);
}

#[test]
fn data_assimilation_moves_toward_measurement() {
    let m = StateSpaceModel::double_integrator(0.1);
    let mut kf = KfState::new(2);
    kf.forecast(&m, 0.0, &DMatrix::identity(2, 2));
    let z = kf.residual(&m, 1.0);
    kf.assimilate(&m, z, 0.5).unwrap();
    assert!(kf.x_da[0] > 0.0 && kf.x_da[0] < 1.0);
    assert_eq!(kf.k_da.len(), 2);
}
