//! Reference checks of the solver and of the inverse stages against the
//! modal oracle.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use subdiff_core::continuation::{reduce_data, ContinuationOptions};
use subdiff_core::meshfem::{assemble_mass, assemble_stiffness, ElementField, Mesh};
use subdiff_core::order_recovery::{fit_order, sample_times, OrderFit, OrderOptions, Samples};
use subdiff_core::spectral::{oracle_solution, oracle_trace, oracle_trace_at, MittagLeffler, ModalData, SeparableField};
use subdiff_core::timefrac::{scalar_cq, BoundaryTrace, CqStepper, TimeGrid};

use crate::error::Result;

/// `L2(boundary)` distance with the lumped boundary weights.
pub fn boundary_l2(mesh: &Mesh, u: &[f64], v: &[f64]) -> f64 {
    mesh.boundary_nodes()
        .iter()
        .zip(mesh.boundary_weights())
        .map(|(&i, w)| w * (u[i] - v[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Solution of the P1 semidiscrete problem `M D^alpha u + K u = 0`, exact in
/// time, through the generalised eigenbasis of `(K, M)`.
pub struct Semidiscrete {
    /// `L^-T Q`, columns are M-orthonormal eigenvectors.
    modes: DMatrix<f64>,
    lambda: Vec<f64>,
    /// `Q^T L^T`.
    project: DMatrix<f64>,
}

impl Semidiscrete {
    pub fn new(mesh: &Mesh, a: &ElementField) -> Result<Self> {
        let dense = |rows: Vec<Vec<f64>>| {
            let n = rows.len();
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        };
        let m = dense(assemble_mass(mesh).to_dense());
        let k = dense(assemble_stiffness(mesh, a)?.to_dense());
        let chol = m
            .clone()
            .cholesky()
            .ok_or(subdiff_core::Error::NotPositiveDefinite { pivot: 0, value: 0.0 })?;
        let l = chol.l();
        let linv_k = l.solve_lower_triangular(&k).expect("triangular factor is regular");
        let c = l
            .solve_lower_triangular(&linv_k.transpose())
            .expect("triangular factor is regular");
        let c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        let lt = l.transpose();
        let modes = lt
            .solve_upper_triangular(&eig.eigenvectors)
            .expect("triangular factor is regular");
        let project = eig.eigenvectors.transpose() * lt;
        Ok(Semidiscrete {
            modes,
            lambda: eig.eigenvalues.iter().map(|l| l.max(0.0)).collect(),
            project,
        })
    }

    pub fn solve(&self, alpha: f64, u0: &[f64], t: f64) -> Result<Vec<f64>> {
        let ml = MittagLeffler::new(alpha, 1.0)?;
        let c = &self.project * DVector::from_column_slice(u0);
        let scaled = DVector::from_iterator(
            c.len(),
            c.iter().zip(&self.lambda).map(|(c, l)| c * ml.eval_neg(l * t.powf(alpha))),
        );
        Ok((&self.modes * scaled).iter().copied().collect())
    }
}

/// One line of a refinement table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementRow {
    pub alpha: f64,
    pub n: usize,
    pub steps: usize,
    /// Error against the reference that isolates the refined component.
    pub error: f64,
    /// Error against the continuous modal solution.
    pub raw_error: f64,
    /// `error(previous) / error(this)`.
    pub ratio: Option<f64>,
}

fn cos_mode(mesh: &Mesh) -> Vec<f64> {
    mesh.interpolate(|x, y| (PI * x).cos() * (PI * y).cos())
}

fn fem_final(mesh: &Mesh, alpha: f64, steps: usize, u0: &[f64]) -> Result<(Vec<f64>, CqStepper)> {
    let a = ElementField::constant(mesh, 1.0)?;
    let st = CqStepper::new(mesh, &a, alpha, TimeGrid::new(1.0, steps)?)?;
    let zero = vec![0.0; mesh.num_nodes()];
    let mut states = st.solve_forward(mesh, u0, &zero, &[])?;
    Ok((states.pop().expect("at least one state"), st))
}

fn with_ratios(mut rows: Vec<RefinementRow>) -> Vec<RefinementRow> {
    for i in 1..rows.len() {
        rows[i].ratio = Some(rows[i - 1].error / rows[i].error);
    }
    rows
}

/// Time-step refinement for `u0 = cos(pi x) cos(pi y)`, `a = 1`, measured at
/// `T = 1` against the semidiscrete solution on the same mesh.
pub fn temporal_refinement(alpha: f64, n: usize, steps: &[usize]) -> Result<Vec<RefinementRow>> {
    let mesh = Mesh::unit_square(n)?;
    let u0 = cos_mode(&mesh);
    let reference = Semidiscrete::new(&mesh, &ElementField::constant(&mesh, 1.0)?)?.solve(alpha, &u0, 1.0)?;
    let amp = MittagLeffler::new(alpha, 1.0)?.eval_neg(2.0 * PI * PI);
    let exact: Vec<f64> = u0.iter().map(|v| amp * v).collect();
    let rows = steps
        .iter()
        .map(|&s| {
            let (u, _) = fem_final(&mesh, alpha, s, &u0)?;
            Ok(RefinementRow {
                alpha,
                n,
                steps: s,
                error: boundary_l2(&mesh, &u, &reference),
                raw_error: boundary_l2(&mesh, &u, &exact),
                ratio: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(with_ratios(rows))
}

/// Mesh refinement for the same problem, measured against the exact
/// eigenfunction advanced by the same convolution quadrature.
pub fn spatial_refinement(alpha: f64, ns: &[usize], steps: usize) -> Result<Vec<RefinementRow>> {
    let amp = MittagLeffler::new(alpha, 1.0)?.eval_neg(2.0 * PI * PI);
    let rows = ns
        .iter()
        .map(|&n| {
            let mesh = Mesh::unit_square(n)?;
            let u0 = cos_mode(&mesh);
            let (u, st) = fem_final(&mesh, alpha, steps, &u0)?;
            let damp = *scalar_cq(2.0 * PI * PI, st.weights(), 1.0, 0.0, &vec![0.0; steps + 1])
                .last()
                .expect("non-empty");
            let discrete: Vec<f64> = u0.iter().map(|v| damp * v).collect();
            let exact: Vec<f64> = u0.iter().map(|v| amp * v).collect();
            Ok(RefinementRow {
                alpha,
                n,
                steps,
                error: boundary_l2(&mesh, &u, &discrete),
                raw_error: boundary_l2(&mesh, &u, &exact),
                ratio: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(with_ratios(rows))
}

/// Order fit on oracle data for a constant coefficient, sampled at
/// 30 log-spaced times in `[t0 / 100, t0]` at one boundary point.
pub fn order_fit(
    diffusivity: f64,
    alpha: f64,
    t0: f64,
    point: [f64; 2],
    u0: &SeparableField,
    f: &SeparableField,
    k_max: usize,
    axis_k_max: usize,
) -> Result<OrderFit> {
    let data = ModalData::separable(diffusivity, k_max, axis_k_max, u0, f, &[])?;
    order_fit_with(&data, alpha, t0, point)
}

pub fn order_fit_with(data: &ModalData, alpha: f64, t0: f64, point: [f64; 2]) -> Result<OrderFit> {
    let ts = sample_times(t0)?;
    let sol = oracle_solution(data, alpha, &ts)?;
    let tr = oracle_trace_at(data, &sol, &[point])?;
    let h: Vec<f64> = tr.total().iter().map(|r| r[0]).collect();
    let samples = Samples::with_trapezoid_weights(ts, h)?;
    Ok(fit_order(&samples, &OrderOptions::default())?)
}

/// Result of continuing oracle data with a known split.
#[derive(Debug, Clone)]
pub struct ContinuationCheck {
    /// `|hbar - h_b| / |h_b|` in `L2(boundary x [t_split, T])`.
    pub relative_error: f64,
    pub fallbacks: usize,
}

pub fn continuation_check(
    mesh: &Mesh,
    grid: TimeGrid,
    alpha: f64,
    data: &ModalData,
    t_split: f64,
    opts: &ContinuationOptions,
) -> Result<ContinuationCheck> {
    let times = grid.times();
    let tr = oracle_trace(data, alpha, mesh, &times)?;
    let h = BoundaryTrace {
        times: times.clone(),
        values: tr.total(),
    };
    let hb = BoundaryTrace {
        times: times.clone(),
        values: tr.boundary.clone(),
    };
    let red = reduce_data(&h, t_split, opts)?;
    let tw: Vec<f64> = grid
        .trapezoid_weights()
        .iter()
        .zip(&times)
        .map(|(w, t)| if *t >= t_split { *w } else { 0.0 })
        .collect();
    let bw = mesh.boundary_weights();
    let d = red.trace.sub(&hb);
    Ok(ContinuationCheck {
        relative_error: (d.inner(&d, &tw, &bw) / hb.inner(&hb, &tw, &bw)).sqrt(),
        fallbacks: red.diagnostics.iter().filter(|d| d.fallback).count(),
    })
}
