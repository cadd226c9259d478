use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subdiff_core::levelset::*;
use subdiff_core::meshfem::*;
use subdiff_core::spectral::EdgeProfiles;
use subdiff_core::spectral::Profile1D;
use subdiff_core::timefrac::*;

fn disc(cx: f64, cy: f64, r: f64) -> Shape {
    Shape::Disc { center: [cx, cy], radius: r }
}

fn cos_flux(mesh: &Mesh) -> Vec<Excitation> {
    let eta = EdgeProfiles::uniform(Profile1D::Cos(2));
    vec![Excitation {
        eta: mesh.interpolate_boundary(|x, y| eta.eval(x, y)),
        profile: TimeProfile::Step { t_on: 0.5 },
    }]
}

/// Data from the true disc and a problem around a smaller initial circle.
fn setup(n: usize, steps: usize, beta: f64) -> (Mesh, TimeGrid, Vec<Excitation>, BoundaryTrace, Vec<f64>) {
    let mesh = Mesh::unit_square(n).unwrap();
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let exc = cos_flux(&mesh);
    let truth = init_levelset(&mesh, &disc(0.5, 0.5, 1.0 / 3.0)).unwrap();
    let p = RecoveryProblem::new(&mesh, 0.8, grid, exc.clone(), BoundaryTrace::zeros(grid.times(), mesh.boundary_nodes().len()), beta).unwrap();
    let data = p.evaluate(&truth, 1.0, 10.0).unwrap().trace;
    let phi0 = init_levelset(&mesh, &disc(0.45, 0.55, 0.15)).unwrap();
    (mesh, grid, exc, data, phi0)
}

#[test]
fn disc_distance_values() {
    let s = disc(0.5, 0.5, 1.0 / 3.0);
    assert!((s.signed_distance([0.5, 0.5]) - 1.0 / 3.0).abs() < 1e-15);
    assert!(s.signed_distance([0.5, 0.5 + 1.0 / 3.0]).abs() < 1e-15);
    assert!((s.signed_distance([0.0, 0.0]) - (1.0 / 3.0 - 0.5f64.sqrt())).abs() < 1e-15);
    assert!(init_levelset(&Mesh::unit_square(2).unwrap(), &disc(0.5, 0.5, 0.0)).is_err());
}

#[test]
fn two_discs_match_pointwise_maximum() {
    let mesh = Mesh::unit_square(20).unwrap();
    let (a, b) = (disc(0.25, 0.5, 0.2), disc(0.75, 0.5, 0.2));
    let phi = init_levelset(&mesh, &Shape::Union(vec![a.clone(), b.clone()])).unwrap();
    for (p, v) in mesh.nodes().iter().zip(&phi) {
        let d1 = 0.2 - ((p[0] - 0.25).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
        let d2 = 0.2 - ((p[0] - 0.75).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
        assert_eq!(*v, d1.max(d2));
        assert_eq!(*v > 0.0, d1 > 0.0 || d2 > 0.0);
    }
}

#[test]
fn coefficient_values() {
    let mesh = Mesh::unit_square(10).unwrap();
    let zero = vec![0.0; mesh.num_nodes()];
    let a = coeff_from_levelset(&mesh, &zero, 1.0, 10.0, 0.1).unwrap();
    assert!(a.values().iter().all(|v| *v == 5.5));
    let phi = init_levelset(&mesh, &disc(0.5, 0.5, 0.3)).unwrap();
    let c = coeff_from_levelset(&mesh, &phi, 3.0, 3.0, 0.1).unwrap();
    assert!(c.values().iter().all(|v| (v - 3.0).abs() < 1e-15));
    let eps = mesh.h();
    let a = coeff_from_levelset(&mesh, &phi, 1.0, 10.0, eps).unwrap();
    for (e, t) in mesh.triangles().iter().enumerate() {
        let pc = (phi[t[0]] + phi[t[1]] + phi[t[2]]) / 3.0;
        let direct = 10.0 - 9.0 * (0.5 + (pc / eps).atan() / std::f64::consts::PI);
        assert!((a.values()[e] - direct).abs() < 1e-13);
        assert!(a.values()[e] >= 1.0 && a.values()[e] <= 10.0);
    }
    assert!(coeff_from_levelset(&mesh, &phi, -1.0, 10.0, eps).is_err());
}

#[test]
fn delta_is_derivative_of_heaviside() {
    let eps = 0.05;
    for x in [-0.3, -0.05, 0.0, 0.01, 0.2] {
        let s = 1e-6;
        let fd = (heaviside(x + s, eps) - heaviside(x - s, eps)) / (2.0 * s);
        assert!((fd - dirac(x, eps)).abs() <= 1e-4 * dirac(x, eps));
    }
}

#[test]
fn zero_data_and_zero_flux_give_zero_objective() {
    let mesh = Mesh::unit_square(6).unwrap();
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let exc = vec![Excitation { eta: vec![0.0; mesh.boundary_nodes().len()], profile: TimeProfile::Step { t_on: 0.5 } }];
    let data = BoundaryTrace::zeros(grid.times(), mesh.boundary_nodes().len());
    let p = RecoveryProblem::new(&mesh, 0.5, grid, exc, data, 0.0).unwrap();
    let phi = init_levelset(&mesh, &disc(0.5, 0.5, 0.2)).unwrap();
    let g = p.gradient(&phi, 1.0, 10.0).unwrap();
    assert_eq!(g.j, 0.0);
    assert!(g.d_phi.iter().all(|v| *v == 0.0));
    assert_eq!((g.d_a1, g.d_a2), (0.0, 0.0));
}

#[test]
fn equal_values_give_zero_level_set_gradient() {
    let (mesh, grid, exc, data, phi0) = setup(8, 16, 0.0);
    let p = RecoveryProblem::new(&mesh, 0.8, grid, exc, data, 0.0).unwrap();
    let g = p.gradient(&phi0, 4.0, 4.0).unwrap();
    assert!(g.j > 0.0);
    assert!(g.d_phi.iter().all(|v| *v == 0.0));
}

fn fd_check(beta: f64, seed: u64) -> f64 {
    let (mesh, grid, exc, data, phi0) = setup(16, 32, beta);
    let p = RecoveryProblem::new(&mesh, 0.8, grid, exc, data, beta).unwrap();
    let (a1, a2) = (0.9, 10.0);
    let g = p.gradient(&phi0, a1, a2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let dir: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = 1e-5;
        let shift = |c: f64| phi0.iter().zip(&dir).map(|(p, d)| p + c * d).collect::<Vec<_>>();
        let jp = p.evaluate(&shift(s), a1, a2).unwrap().j;
        let jm = p.evaluate(&shift(-s), a1, a2).unwrap().j;
        let fd = (jp - jm) / (2.0 * s);
        let ad: f64 = g.d_phi.iter().zip(&dir).map(|(a, b)| a * b).sum();
        worst = worst.max((fd - ad).abs() / ad.abs());
    }
    worst
}

#[test]
fn misfit_gradient_matches_finite_differences() {
    let err = fd_check(0.0, 1);
    assert!(err <= 1e-5, "relative error {err:e}");
}

#[test]
fn regularised_gradient_matches_finite_differences() {
    let err = fd_check(1e-8, 2);
    assert!(err <= 1e-3, "relative error {err:e}");
}

#[test]
fn value_gradients_match_finite_differences() {
    let (mesh, grid, exc, data, phi0) = setup(8, 16, 1e-6);
    let p = RecoveryProblem::new(&mesh, 0.8, grid, exc, data, 1e-6).unwrap();
    let g = p.gradient(&phi0, 1.2, 9.0).unwrap();
    let s = 1e-5;
    let j = |a1: f64, a2: f64| p.evaluate(&phi0, a1, a2).unwrap().j;
    let fd1 = (j(1.2 + s, 9.0) - j(1.2 - s, 9.0)) / (2.0 * s);
    let fd2 = (j(1.2, 9.0 + s) - j(1.2, 9.0 - s)) / (2.0 * s);
    assert!((fd1 - g.d_a1).abs() <= 1e-5 * g.d_a1.abs(), "{fd1} {}", g.d_a1);
    assert!((fd2 - g.d_a2).abs() <= 1e-5 * g.d_a2.abs(), "{fd2} {}", g.d_a2);
}

#[test]
fn minimiser_start_stops_immediately() {
    let mesh = Mesh::unit_square(8).unwrap();
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let exc = cos_flux(&mesh);
    let phi0 = init_levelset(&mesh, &disc(0.5, 0.5, 0.25)).unwrap();
    let blank = BoundaryTrace::zeros(grid.times(), mesh.boundary_nodes().len());
    let data = RecoveryProblem::new(&mesh, 0.8, grid, exc.clone(), blank, 0.0).unwrap().evaluate(&phi0, 0.9, 10.0).unwrap().trace;
    let p = RecoveryProblem::new(&mesh, 0.8, grid, exc, data, 0.0).unwrap();
    let opts = RecoveryOptions { iterations: 50, monotone: true, ..Default::default() };
    let r = recover_interface(&p, &phi0, 0.9, 10.0, &opts).unwrap();
    assert_eq!(r.stop, StopReason::Stationary);
    assert_eq!(r.history.len(), 1);
    assert_eq!(r.history[0].j, 0.0);
}

#[test]
fn monotone_descent_never_increases_the_objective() {
    let (mesh, grid, exc, data, phi0) = setup(10, 16, 1e-8);
    let p = RecoveryProblem::new(&mesh, 0.8, grid, exc, data, 1e-8).unwrap();
    let opts = RecoveryOptions { iterations: 40, monotone: true, snapshot_every: 10, ..Default::default() };
    let r = recover_interface(&p, &phi0, 0.9, 10.0, &opts).unwrap();
    for w in r.history.windows(2) {
        assert!(w[1].j <= w[0].j);
    }
    assert!(r.history.last().unwrap().j < r.history[0].j);
    assert!(r.snapshots.len() >= 2);
}

fn steady() -> ReinitOptions {
    ReinitOptions { update_tol: Some(0.01), ..Default::default() }
}

#[test]
fn reinit_keeps_exact_distance() {
    let mesh = Mesh::unit_square(20).unwrap();
    let phi = init_levelset(&mesh, &disc(0.5, 0.5, 1.0 / 3.0)).unwrap();
    let r = reinitialize(&mesh, &phi, &ReinitOptions::default());
    let diff = r.phi.iter().zip(&phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-3, "max deviation {diff:e}");
}

/// Deviation of the steady state from the exact disc distance, over nodes at
/// least `min_skeleton_distance` from the disc centre.
fn disc_reinit_deviation(n: usize, min_skeleton_distance: f64) -> f64 {
    let mesh = Mesh::unit_square(n).unwrap();
    let phi = init_levelset(&mesh, &disc(0.5, 0.5, 1.0 / 3.0)).unwrap();
    let r = reinitialize(&mesh, &phi, &steady());
    assert!(r.converged);
    mesh.nodes()
        .iter()
        .enumerate()
        .filter(|(_, p)| ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt() >= min_skeleton_distance)
        .map(|(i, _)| (r.phi[i] - phi[i]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn steady_state_keeps_exact_distance_near_interface() {
    for n in [20, 32] {
        let mesh = Mesh::unit_square(n).unwrap();
        let phi = init_levelset(&mesh, &disc(0.5, 0.5, 1.0 / 3.0)).unwrap();
        let r = reinitialize(&mesh, &phi, &steady());
        let band = phi
            .iter()
            .zip(&r.phi)
            .filter(|(p, _)| p.abs() <= 2.0 * mesh.h())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(band <= 1e-3, "n = {n}: band deviation {band:e}");
    }
}

#[test]
fn steady_state_error_is_second_order_off_the_skeleton() {
    let coarse = disc_reinit_deviation(32, 0.1);
    let fine = disc_reinit_deviation(64, 0.1);
    assert!(coarse / fine >= 3.0, "{coarse:e} -> {fine:e}");
    assert!(fine <= 1e-3);
}

#[test]
fn steady_state_rounds_the_disc_centre_by_less_than_half_a_cell() {
    for n in [20, 32, 64] {
        let dev = disc_reinit_deviation(n, 0.0);
        assert!(dev <= 0.5 / n as f64, "n = {n}: {dev:e}");
    }
}

#[test]
fn reinit_restores_unit_slope() {
    let mesh = Mesh::unit_square(32).unwrap();
    let sd = init_levelset(&mesh, &disc(0.5, 0.5, 1.0 / 3.0)).unwrap();
    let steep: Vec<f64> = sd.iter().map(|v| 3.0 * v).collect();
    let r = reinitialize(&mesh, &steep, &ReinitOptions::default());
    assert!(r.rms <= 0.1, "rms {}", r.rms);
    let diff = r.phi.iter().zip(&sd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 2.0 * mesh.h(), "max deviation {diff:e}");
}

#[test]
fn reinit_preserves_nested_contours() {
    let mesh = Mesh::unit_square(40).unwrap();
    // Annulus 0.15 < r < 0.35, distorted away from a distance function.
    let phi: Vec<f64> = mesh
        .nodes()
        .iter()
        .map(|p| {
            let r = ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
            (r - 0.15) * (0.35 - r) * (1.0 + p[0])
        })
        .collect();
    let r = reinitialize(&mesh, &phi, &ReinitOptions::default());
    let near = interface_nodes(&mesh, &phi);
    for i in 0..phi.len() {
        if (phi[i] > 0.0) != (r.phi[i] > 0.0) {
            assert!(near[i], "sign flip away from the contour at node {i}");
        }
    }
    let lines = zero_contours(&mesh, &r.phi);
    assert_eq!(lines.len(), 2);
    for line in &lines {
        let radius: Vec<f64> = line.iter().map(|p| ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt()).collect();
        let target = if radius[0] < 0.25 { 0.15 } else { 0.35 };
        for r in radius {
            assert!((r - target).abs() <= 0.5 * mesh.h(), "contour moved to {r}");
        }
    }
}

#[test]
fn contours_of_two_discs() {
    let mesh = Mesh::unit_square(40).unwrap();
    let shape = Shape::Union(vec![disc(0.25, 0.5, 0.2), disc(0.75, 0.5, 0.2)]);
    let phi = init_levelset(&mesh, &shape).unwrap();
    let lines = zero_contours(&mesh, &phi);
    assert_eq!(lines.len(), 2);
    for line in &lines {
        assert_eq!(line.first(), line.last(), "closed loop expected");
        for p in line {
            assert!(shape.signed_distance(*p).abs() <= mesh.h() * mesh.h());
        }
    }
}

#[test]
fn exact_level_set_has_small_symmetric_difference() {
    let mesh = Mesh::unit_square(20).unwrap();
    // Offset so that no element centroid lies on an edge of the polygon.
    let (dx, dy) = (0.013, 0.007);
    let verts = [[0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.5, 0.5], [0.25, 0.75]];
    let shape = Shape::Polygon(verts.iter().map(|v| [v[0] + dx, v[1] + dy]).collect());
    let phi = init_levelset(&mesh, &shape).unwrap();
    // Misclassified elements lie in a strip of width h around the boundary.
    let perimeter = 1.5 + 2.0 * 0.125f64.sqrt();
    assert!(symmetric_difference(&mesh, &phi, &shape) <= mesh.h() * perimeter);
    let empty = vec![-1.0; mesh.num_nodes()];
    let inside: f64 = (0..mesh.num_triangles())
        .filter(|&e| {
            let c = mesh.centroid(e);
            let (x, y) = (c[0] - dx, c[1] - dy);
            // Square minus the notch triangle (0.25,0.75),(0.5,0.5),(0.75,0.75).
            let in_square = (0.25..0.75).contains(&x) && (0.25..0.75).contains(&y);
            let in_notch = y > 0.5 + (x - 0.5).abs();
            in_square && !in_notch
        })
        .map(|e| mesh.area(e))
        .sum();
    let got = symmetric_difference(&mesh, &empty, &shape);
    assert!((got - inside).abs() < 1e-12, "{got} vs {inside}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sign_flip_symmetry(cx in 0.2f64..0.8, cy in 0.2f64..0.8, r in 0.05f64..0.3, a1 in 0.5f64..5.0, a2 in 5.0f64..20.0) {
        let mesh = Mesh::unit_square(8).unwrap();
        let phi = init_levelset(&mesh, &disc(cx, cy, r)).unwrap();
        let neg: Vec<f64> = phi.iter().map(|v| -v).collect();
        let x = coeff_from_levelset(&mesh, &phi, a1, a2, 0.1).unwrap();
        let y = coeff_from_levelset(&mesh, &neg, a2, a1, 0.1).unwrap();
        for (u, v) in x.values().iter().zip(y.values()) {
            prop_assert!((u - v).abs() <= 1e-14 * u.abs());
        }
    }

    #[test]
    fn total_variation_gradient_is_exact(seed in 0u64..1000) {
        let mesh = Mesh::unit_square(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..mesh.num_triangles()).map(|_| rng.gen_range(1.0..10.0)).collect();
        let (_, g) = total_variation(&mesh, &a, 1e-3);
        let dir: Vec<f64> = (0..a.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = 1e-6;
        let shifted = |c: f64| a.iter().zip(&dir).map(|(x, d)| x + c * d).collect::<Vec<_>>();
        let fd = (total_variation(&mesh, &shifted(s), 1e-3).0 - total_variation(&mesh, &shifted(-s), 1e-3).0) / (2.0 * s);
        let ad: f64 = g.iter().zip(&dir).map(|(x, y)| x * y).sum();
        prop_assert!((fd - ad).abs() <= 1e-6 * ad.abs().max(1.0));
    }
}
