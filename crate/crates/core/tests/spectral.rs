use proptest::prelude::*;
use std::f64::consts::PI;
use subdiff_core::meshfem::*;
use subdiff_core::quadrature::integrate;
use subdiff_core::spectral::*;
use subdiff_core::timefrac::*;

fn poly(c: &[f64]) -> Profile1D {
    Profile1D::Poly(c.to_vec())
}

#[test]
fn eigenvalues_small_cases() {
    let e0 = laplace_neumann_eigenpairs(0);
    assert_eq!(e0.len(), 1);
    assert_eq!(e0[0].lambda, 0.0);
    let e1: Vec<f64> = laplace_neumann_eigenpairs(1).iter().map(|e| e.lambda / (PI * PI)).collect();
    assert_eq!(e1, vec![0.0, 1.0, 1.0, 2.0]);
}

#[test]
fn eigenvalues_match_brute_force_enumeration() {
    let k_max = 3;
    let mut brute = Vec::new();
    for k in 0..=k_max {
        for l in 0..=k_max {
            brute.push(k * k + l * l);
        }
    }
    brute.sort();
    let got: Vec<usize> = laplace_neumann_eigenpairs(k_max)
        .iter()
        .map(|e| (e.lambda / (PI * PI)).round() as usize)
        .collect();
    assert_eq!(got, brute);
    assert_eq!(got.iter().filter(|&&v| v == 25).count(), 0);
    assert_eq!(got.iter().filter(|&&v| v == 10).count(), 2);
}

#[test]
fn constant_initial_data_is_stationary() {
    let u0 = SeparableField::term(2.5, poly(&[1.0]), poly(&[1.0]));
    let data = ModalData::separable(1.0, 4, 4, &u0, &SeparableField::zero(), &[]).unwrap();
    let pts = [[0.0, 0.3], [0.7, 0.1], [1.0, 1.0]];
    let sol = oracle_solution(&data, 0.6, &[0.0, 0.4, 1.0]).unwrap();
    let tr = oracle_trace_at(&data, &sol, &pts).unwrap();
    for row in tr.total() {
        for v in row {
            assert!((v - 2.5).abs() < 1e-14);
        }
    }
}

#[test]
fn constant_source_grows_like_t_alpha() {
    let alpha = 0.45;
    let f = SeparableField::term(3.0, poly(&[1.0]), poly(&[1.0]));
    let data = ModalData::separable(1.0, 3, 3, &SeparableField::zero(), &f, &[]).unwrap();
    let times = [0.1, 0.5, 1.0];
    let sol = oracle_solution(&data, alpha, &times).unwrap();
    let tr = oracle_trace_at(&data, &sol, &[[0.2, 0.0], [1.0, 0.6]]).unwrap();
    let g = statrs::function::gamma::gamma(1.0 + alpha);
    for (i, t) in times.iter().enumerate() {
        let exact = 3.0 * t.powf(alpha) / g;
        for v in &tr.interior[i] {
            assert!((v - exact).abs() < 1e-13 * exact.max(1.0));
        }
    }
}

#[test]
fn zero_data_gives_zero_trace() {
    let z = SeparableField::zero();
    let ex = ModalExcitation {
        eta: EdgeProfiles::uniform(Profile1D::constant(0.0)),
        profile: TimeProfile::Step { t_on: 0.2 },
    };
    let data = ModalData::separable(1.0, 5, 10, &z, &z, &[ex]).unwrap();
    let mesh = Mesh::unit_square(4).unwrap();
    let tr = oracle_trace(&data, 0.5, &mesh, &[0.0, 0.5, 1.0]).unwrap();
    assert!(tr.total().iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn no_flux_means_no_boundary_part() {
    let u0 = SeparableField::term(1.0, poly(&[0.0, 0.0, 1.0, -2.0, 1.0]), poly(&[1.0, 1.0]));
    let data = ModalData::separable(1.0, 8, 40, &u0, &SeparableField::zero(), &[]).unwrap();
    let mesh = Mesh::unit_square(4).unwrap();
    let tr = oracle_trace(&data, 0.5, &mesh, &[0.3, 1.0]).unwrap();
    assert!(tr.boundary.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn single_mode_matches_scalar_cq_at_first_order() {
    let alpha = 0.7;
    let u0 = SeparableField::term(1.0, Profile1D::Cos(1), poly(&[1.0]));
    let data = ModalData::separable(1.0, 2, 2, &u0, &SeparableField::zero(), &[]).unwrap();
    let sol = oracle_solution(&data, alpha, &[1.0]).unwrap();
    let idx = data.modes.iter().position(|m| m.k == 1 && m.l == 0).unwrap();
    let exact = sol.interior[0][idx] * data.modes[idx].norm_const();
    let mut errs = Vec::new();
    for n in [50, 100, 200] {
        let w = cq_weights(alpha, 1.0 / n as f64, n).unwrap();
        let u = scalar_cq(PI * PI, &w, 1.0, 0.0, &vec![0.0; n + 1]);
        errs.push((u[n] - exact).abs());
    }
    for p in errs.windows(2) {
        let r = p[0] / p[1];
        assert!(r > 1.8 && r < 2.2, "{errs:?}");
    }
}

#[test]
fn step_response_matches_duhamel_quadrature() {
    // int_0^s r^(alpha-1) E_{alpha,alpha}(-lambda r^alpha) dr, substituted u = r^alpha.
    let (alpha, t_on) = (0.6, 0.25);
    let eta = EdgeProfiles {
        bottom: Profile1D::Cos(2),
        right: Profile1D::constant(0.0),
        top: Profile1D::constant(0.0),
        left: Profile1D::constant(0.0),
    };
    let ex = ModalExcitation { eta, profile: TimeProfile::Step { t_on } };
    let z = SeparableField::zero();
    let data = ModalData::separable(1.0, 3, 3, &z, &z, &[ex]).unwrap();
    let t = 0.9;
    let sol = oracle_solution(&data, alpha, &[t]).unwrap();
    let ml = MittagLeffler::new(alpha, alpha).unwrap();
    for (i, m) in data.modes.iter().enumerate() {
        let lam = m.lambda;
        let q = integrate(|u| ml.eval_neg(lam * u), 0.0, (t - t_on).powf(alpha), &[], 1e-15, 1e-13, 200);
        let expect = data.eta[0][i] * q.value / alpha;
        assert!((sol.boundary[0][i] - expect).abs() <= 1e-11 * expect.abs().max(1e-3), "mode {:?}", m);
    }
}

#[test]
fn ramp_tends_to_step_as_it_sharpens() {
    let alpha = 0.8;
    let mk = |profile| ModalExcitation { eta: EdgeProfiles::uniform(Profile1D::Cos(1)), profile };
    let z = SeparableField::zero();
    let step = ModalData::separable(1.0, 4, 4, &z, &z, &[mk(TimeProfile::Step { t_on: 0.5 })]).unwrap();
    let ramp = ModalData::separable(1.0, 4, 4, &z, &z, &[mk(TimeProfile::Ramp { t0: 0.5, t1: 0.5 + 1e-6 })]).unwrap();
    let a = oracle_solution(&step, alpha, &[1.0]).unwrap();
    let b = oracle_solution(&ramp, alpha, &[1.0]).unwrap();
    for (x, y) in a.boundary[0].iter().zip(&b.boundary[0]) {
        assert!((x - y).abs() < 1e-5 * x.abs().max(1e-3));
    }
}

#[test]
fn fem_trace_agrees_with_oracle() {
    // Smooth interior data, source and a switched cosine flux.
    let alpha = 0.8;
    let q = poly(&[0.0, 0.0, 1.0, -2.0, 1.0]);
    let u0 = SeparableField::term(1.0, q.clone(), q);
    let f = SeparableField::term(1.0, poly(&[1.0]), poly(&[1.0]))
        .plus(SeparableField::term(1.0, poly(&[0.0, 1.0]), poly(&[1.0])))
        .plus(SeparableField::term(1.0, poly(&[1.0]), poly(&[0.0, 1.0])));
    let ex = ModalExcitation {
        eta: EdgeProfiles::uniform(Profile1D::Cos(2)),
        profile: TimeProfile::Step { t_on: 0.5 },
    };
    let data = ModalData::separable(1.0, 24, 4000, &u0, &f, &[ex.clone()]).unwrap();
    let (n, steps) = (32, 256);
    let mesh = Mesh::unit_square(n).unwrap();
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let times = grid.times();
    let oracle = oracle_trace(&data, alpha, &mesh, &times).unwrap().total();

    let a = ElementField::constant(&mesh, 1.0).unwrap();
    let st = CqStepper::new(&mesh, &a, alpha, grid).unwrap();
    let u0n = mesh.interpolate(|x, y| u0.eval(x, y));
    let fn_ = mesh.interpolate(|x, y| f.eval(x, y));
    let eta = mesh.interpolate_boundary(|x, y| ex.eta.eval(x, y));
    let exc = [Excitation { eta, profile: ex.profile.clone() }];
    let states = st.solve_forward(&mesh, &u0n, &fn_, &exc).unwrap();
    let tr = boundary_trace(&mesh, &grid, &states);
    let oracle = BoundaryTrace { times, values: oracle };
    let tw = grid.trapezoid_weights();
    let bw = mesh.boundary_weights();
    let diff = tr.sub(&oracle);
    let rel = (diff.inner(&diff, &tw, &bw) / oracle.inner(&oracle, &tw, &bw)).sqrt();
    // First-order CQ at tau = 1/256 and h^2 = 1e-3 bound the relative error.
    assert!(rel <= 1e-2, "relative L2 error {rel:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn oracle_is_linear(c in -2.0f64..2.0, alpha in 0.2f64..0.95, t in 0.05f64..1.0) {
        let u1 = SeparableField::term(1.0, poly(&[0.3, -1.0, 0.5]), Profile1D::Cos(1));
        let u2 = SeparableField::term(0.7, Profile1D::Cos(2), poly(&[1.0, 2.0]));
        let e = |p| ModalExcitation { eta: EdgeProfiles::uniform(p), profile: TimeProfile::Step { t_on: 0.0 } };
        let z = SeparableField::zero();
        let d1 = ModalData::separable(1.0, 6, 6, &u1, &z, &[e(Profile1D::Cos(1))]).unwrap();
        let d2 = ModalData::separable(1.0, 6, 6, &u2, &z, &[e(Profile1D::Cos(1))]).unwrap();
        let mut eta12 = d1.eta[0].clone();
        eta12.iter_mut().zip(&d2.eta[0]).for_each(|(a, b)| *a += c * b);
        let mut d12 = d1.clone();
        d12.u0 = d1.u0.iter().zip(&d2.u0).map(|(a, b)| a + c * b).collect();
        d12.eta = vec![eta12];
        let s1 = oracle_solution(&d1, alpha, &[t]).unwrap();
        let s2 = oracle_solution(&d2, alpha, &[t]).unwrap();
        let s12 = oracle_solution(&d12, alpha, &[t]).unwrap();
        for i in 0..d1.modes.len() {
            let lin = s1.interior[0][i] + s1.boundary[0][i] + c * (s2.interior[0][i] + s2.boundary[0][i]);
            prop_assert!((s12.interior[0][i] + s12.boundary[0][i] - lin).abs() <= 1e-12 * (1.0 + lin.abs()));
        }
    }
}
