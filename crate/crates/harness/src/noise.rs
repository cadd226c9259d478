use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use subdiff_core::timefrac::BoundaryTrace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Relative level, scaled by the sup norm of the clean trace.
    pub level: f64,
    pub seed: u64,
}

/// `h + level * |h|_inf * xi` with i.i.d. standard normal `xi`, drawn in
/// time-major order from a ChaCha8 stream seeded with `spec.seed`.
pub fn add_noise(h: &BoundaryTrace, spec: NoiseSpec) -> BoundaryTrace {
    if spec.level == 0.0 {
        return h.clone();
    }
    let scale = spec.level * h.sup_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let values = h
        .values
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    v + scale * xi
                })
                .collect()
        })
        .collect();
    BoundaryTrace {
        times: h.times.clone(),
        values,
    }
}
