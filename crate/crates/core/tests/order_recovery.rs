use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use subdiff_core::order_recovery::*;

fn model(t: &[f64], c0: f64, c1: f64, alpha: f64) -> Vec<f64> {
    t.iter().map(|t| c0 + c1 * t.powf(alpha)).collect()
}

#[test]
fn exact_model_inner_fit() {
    let t = sample_times(1.0).unwrap();
    let h = model(&t, 2.0, 3.0, 0.8);
    let s = Samples::with_trapezoid_weights(t, h).unwrap();
    let f = varpro_inner(&s, 0.8).unwrap();
    assert!((f.c0 - 2.0).abs() < 1e-12 && (f.c1 - 3.0).abs() < 1e-12 && f.residual < 1e-12);
}

#[test]
fn inner_residual_matches_dense_qr() {
    let t = sample_times(1.0).unwrap();
    let h = model(&t, 2.0, 3.0, 0.8);
    let s = Samples::with_trapezoid_weights(t.clone(), h.clone()).unwrap();
    let alpha = 0.5;
    let m = t.len();
    let a = DMatrix::from_fn(m, 2, |i, j| s.w[i].sqrt() * if j == 0 { 1.0 } else { t[i].powf(alpha) });
    let b = DVector::from_iterator(m, (0..m).map(|i| s.w[i].sqrt() * h[i]));
    let qr = a.clone().qr();
    let x = qr.r().solve_upper_triangular(&(qr.q().transpose() * &b)).unwrap();
    let oracle = (a * x - b).norm();
    let got = varpro_inner(&s, alpha).unwrap().residual;
    assert!(oracle > 0.0);
    assert!((got - oracle).abs() <= 1e-12 * oracle.max(1e-3), "{got} vs {oracle}");
}

#[test]
fn synthetic_order_recovered() {
    let t = sample_times(1e-6).unwrap();
    let h = model(&t, 0.1, 1.0, 0.8);
    let s = Samples::with_trapezoid_weights(t, h).unwrap();
    let fit = fit_order(&s, &OrderOptions::default()).unwrap();
    assert!((fit.alpha - 0.8).abs() <= 1e-6);
    assert_eq!(fit.profile.len(), 50);
}

#[test]
fn too_few_samples_rejected() {
    assert!(Samples::with_trapezoid_weights(vec![1.0, 2.0], vec![0.0, 1.0]).is_err());
    assert!(Samples::with_trapezoid_weights(vec![1.0, 1.0, 2.0], vec![0.0; 3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_data_recovers_all_parameters(alpha in 0.1f64..0.9, c0 in -2.0f64..2.0, c1 in 0.2f64..3.0) {
        let t = sample_times(1.0).unwrap();
        let s = Samples::with_trapezoid_weights(t.clone(), model(&t, c0, c1, alpha)).unwrap();
        let fit = fit_order(&s, &OrderOptions::default()).unwrap();
        prop_assert!((fit.alpha - alpha).abs() <= 1e-6);
        prop_assert!((fit.c0 - c0).abs() <= 1e-9, "c0 {} vs {}", fit.c0, c0);
        prop_assert!((fit.c1 - c1).abs() <= 1e-9, "c1 {} vs {}", fit.c1, c1);
    }

    #[test]
    fn scale_invariance(scale in 0.01f64..100.0, alpha in 0.2f64..0.9) {
        let t = sample_times(1e-3).unwrap();
        let h: Vec<f64> = t.iter().map(|t| 1.0 + t.powf(alpha) + 5.0 * t.powf(2.0 * alpha)).collect();
        let a = fit_order(&Samples::with_trapezoid_weights(t.clone(), h.clone()).unwrap(), &OrderOptions::default()).unwrap();
        let hs: Vec<f64> = h.iter().map(|v| v * scale).collect();
        let b = fit_order(&Samples::with_trapezoid_weights(t, hs).unwrap(), &OrderOptions::default()).unwrap();
        prop_assert!((a.alpha - b.alpha).abs() <= 1e-6);
        prop_assert!((b.c1 - scale * a.c1).abs() <= 1e-6 * (scale * a.c1).abs());
    }

    #[test]
    fn shift_invariance(shift in -10.0f64..10.0, alpha in 0.2f64..0.9) {
        let t = sample_times(1e-3).unwrap();
        let h: Vec<f64> = t.iter().map(|t| t.powf(alpha) + 5.0 * t.powf(2.0 * alpha)).collect();
        let a = fit_order(&Samples::with_trapezoid_weights(t.clone(), h.clone()).unwrap(), &OrderOptions::default()).unwrap();
        let hs: Vec<f64> = h.iter().map(|v| v + shift).collect();
        let b = fit_order(&Samples::with_trapezoid_weights(t, hs).unwrap(), &OrderOptions::default()).unwrap();
        prop_assert!((a.alpha - b.alpha).abs() <= 1e-6);
        prop_assert!((b.c0 - a.c0 - shift).abs() <= 1e-8);
    }
}
