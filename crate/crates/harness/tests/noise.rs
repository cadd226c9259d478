use subdiff_core::timefrac::BoundaryTrace;
use subdiff_harness::noise::{add_noise, NoiseSpec};

fn ones(steps: usize, nodes: usize) -> BoundaryTrace {
    BoundaryTrace {
        times: (0..steps).map(|i| i as f64 / steps as f64).collect(),
        values: vec![vec![1.0; nodes]; steps],
    }
}

#[test]
fn zero_level_is_identity() {
    let h = ones(5, 4);
    assert_eq!(add_noise(&h, NoiseSpec { level: 0.0, seed: 9 }), h);
}

#[test]
fn same_seed_same_noise() {
    let h = ones(10, 8);
    let a = add_noise(&h, NoiseSpec { level: 0.05, seed: 1 });
    let b = add_noise(&h, NoiseSpec { level: 0.05, seed: 1 });
    let c = add_noise(&h, NoiseSpec { level: 0.05, seed: 2 });
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn one_percent_noise_has_the_stated_spread() {
    let h = ones(100, 100);
    let noisy = add_noise(&h, NoiseSpec { level: 0.01, seed: 7 });
    let d: Vec<f64> = noisy.values.iter().flatten().map(|v| v - 1.0).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd - 0.01).abs() <= 0.001, "sd {sd}");
    assert!(mean.abs() <= 4.0 * 0.01 / n.sqrt(), "mean {mean}");
    assert_eq!(noisy.times, h.times);
}

#[test]
fn noise_scales_with_the_sup_norm() {
    let mut h = ones(20, 10);
    let base = add_noise(&h, NoiseSpec { level: 0.01, seed: 3 });
    h.values.iter_mut().flatten().for_each(|v| *v *= 4.0);
    let scaled = add_noise(&h, NoiseSpec { level: 0.01, seed: 3 });
    for (a, b) in base.values.iter().flatten().zip(scaled.values.iter().flatten()) {
        assert!(((b - 4.0) - 4.0 * (a - 1.0)).abs() < 1e-14);
    }
}
