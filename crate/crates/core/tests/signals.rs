mod common;

use numdiff::signals::*;
use numdiff::{DerivativeOrder, Error};
use proptest::prelude::*;

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

#[test]
fn measured_snr_matches_request() {
    let clean = generate_two_tone(1.0, 20.0, 1.0, 30.0, 0.01, 100_000).unwrap();
    for (snr, seed) in [(20.0, 1u64), (40.0, 2), (60.0, 3)] {
        let noisy = add_noise(&clean, &NoiseSpec::new(snr, seed)).unwrap();
        let noise: Vec<f64> = noisy.values().iter().zip(clean.values()).map(|(a, b)| a - b).collect();
        let measured = 20.0 * (clean.rms() / rms(&noise)).log10();
        assert!((measured - snr).abs() <= 0.5, "{snr} dB requested, {measured} measured");
    }
}

#[test]
fn two_tone_truth_matches_oversampled_differences() {
    let ts = 0.01;
    let n = 2000;
    let s = generate_two_tone(1.0, 20.0, 1.0, 30.0, ts, n).unwrap();
    let fine = generate_two_tone(1.0, 20.0, 1.0, 30.0, ts / 100.0, 100 * n + 1).unwrap();
    let h = ts / 100.0;
    let y = fine.values();
    let d1 = s.truth(DerivativeOrder::First).unwrap();
    let d2 = s.truth(DerivativeOrder::Second).unwrap();
    let scale1 = d1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale2 = d2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 1..n {
        let j = 100 * k;
        // fourth-order central stencils
        let fd1 = (-y[j + 2] + 8.0 * y[j + 1] - 8.0 * y[j - 1] + y[j - 2]) / (12.0 * h);
        let fd2 = (-y[j + 2] + 16.0 * y[j + 1] - 30.0 * y[j] + 16.0 * y[j - 1] - y[j - 2]) / (12.0 * h * h);
        assert!((fd1 - d1[k]).abs() <= 1e-6 * scale1, "k={k}: {fd1} vs {}", d1[k]);
        assert!((fd2 - d2[k]).abs() <= 1e-6 * scale2, "k={k}: {fd2} vs {}", d2[k]);
    }
}

#[test]
fn maneuver_truth_matches_finite_differences() {
    let p = ManeuverProfile::default();
    let s = generate_maneuver_trajectory(15.0, 0.01, &p).unwrap();
    assert_eq!(s.len(), 1500);
    let h = 1e-4;
    for t in [0.5, 7.0, p.midpoint_s, 8.1, 14.0] {
        let [_, v, a] = p.evaluate(t);
        let fd1 = (p.evaluate(t + h)[0] - p.evaluate(t - h)[0]) / (2.0 * h);
        let fd2 = (p.evaluate(t + h)[1] - p.evaluate(t - h)[1]) / (2.0 * h);
        assert!((fd1 - v).abs() <= 1e-6 * v.abs().max(1.0));
        assert!((fd2 - a).abs() <= 1e-6 * a.abs().max(1.0));
    }
}

#[test]
fn seeds_are_reproducible_and_distinct() {
    assert_eq!(standard_normal_sequence(9, 100), standard_normal_sequence(9, 100));
    assert_ne!(standard_normal_sequence(9, 100), standard_normal_sequence(10, 100));
}

#[test]
fn csv_errors_carry_location() {
    let bad = "t,y\n0,1\n0.1,oops\n";
    match read_csv_from(bad.as_bytes()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(read_csv_from("t,y\n0,1\n0.1,2,3\n".as_bytes()).is_err());
    assert!(read_csv_from("a,b\n0,1\n".as_bytes()).is_err());
}

proptest! {
    #[test]
    fn csv_round_trip(values in prop::collection::vec(-1e6f64..1e6, 2..60), ts in 0.001f64..1.0) {
        let truth: Vec<f64> = values.iter().map(|v| v * 0.5).collect();
        let s = SampledSignal::new(ts, values).unwrap().with_truth(DerivativeOrder::First, truth).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_csv(&s, &path).unwrap();
        let back = read_csv(&path).unwrap();
        prop_assert_eq!(back.values(), s.values());
        prop_assert_eq!(back.truth(DerivativeOrder::First), s.truth(DerivativeOrder::First));
        prop_assert!((back.sample_time_s() - ts).abs() <= 1e-12 * ts.max(1.0));
    }
}
