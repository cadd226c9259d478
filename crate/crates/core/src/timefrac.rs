//! Backward-Euler convolution quadrature for the Caputo derivative, the
//! fully discrete forward solver and its exact discrete adjoint.

use std::io::{BufRead, Write};

use crate::error::{check_len, Error, Result};
use crate::meshfem::{
    assemble_mass, assemble_neumann_load, assemble_stiffness, BandCholesky, EdgeQuadrature,
    ElementField, Mesh, SparseMatrix,
};

/// Convolution weights `omega_j = tau^(-alpha) b_j`, `j = 0..=n`, of the
/// generating function `((1 - z) / tau)^alpha`.
pub fn cq_weights(alpha: f64, tau: f64, n: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("order must lie in (0, 1], got {alpha}")));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {tau}")));
    }
    let scale = tau.powf(-alpha);
    let mut w = Vec::with_capacity(n + 1);
    let mut b = 1.0;
    w.push(scale);
    for j in 1..=n {
        b *= (j as f64 - 1.0 - alpha) / j as f64;
        w.push(scale * b);
    }
    Ok(w)
}

/// Discrete Caputo derivative `sum_j omega_j (u_{n-j} - u_0)` for `n = 0..len`.
pub fn caputo_apply(seq: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() < seq.len() {
        return Err(Error::DimensionMismatch {
            expected: seq.len(),
            got: weights.len(),
        });
    }
    let u0 = seq.first().copied().unwrap_or(0.0);
    Ok((0..seq.len())
        .map(|n| (0..=n).map(|j| weights[j] * (seq[n - j] - u0)).sum())
        .collect())
}

/// Backward discrete Riemann-Liouville derivative `sum_{m >= n} omega_{m-n} v_m`.
pub fn backward_rl_apply(seq: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() < seq.len() {
        return Err(Error::DimensionMismatch {
            expected: seq.len(),
            got: weights.len(),
        });
    }
    Ok((0..seq.len())
        .map(|n| (n..seq.len()).map(|m| weights[m - n] * seq[m]).sum())
        .collect())
}

/// Relative mismatch between `tau sum_n v_n (D w)_n` and `tau sum_n w_n (D* v)_n`
/// over `n = 1..=N`, where `N + 1 = w.len()`.
///
/// Entries of `v` beyond index `N` are kept in the backward derivative; they
/// stand for a violated terminal condition and show up as a nonzero gap.
pub fn duality_gap(w: &[f64], v: &[f64], weights: &[f64]) -> Result<f64> {
    if v.len() < w.len() || w.is_empty() {
        return Err(Error::InvalidInput("adjoint sequence shorter than forward".into()));
    }
    let n = w.len() - 1;
    let dw = caputo_apply(w, weights)?;
    let dv = backward_rl_apply(v, weights)?;
    let lhs: f64 = (1..=n).map(|k| v[k] * dw[k]).sum();
    let rhs: f64 = (1..=n).map(|k| (w[k] - w[0]) * dv[k]).sum();
    let scale: f64 = (1..=n)
        .map(|k| (v[k] * dw[k]).abs())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    Ok((lhs - rhs).abs() / scale)
}

/// Uniform time grid `t_n = n T / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0) || steps == 0 {
            return Err(Error::InvalidInput("time grid needs T > 0 and N >= 1".into()));
        }
        Ok(TimeGrid { t_final, steps })
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| n as f64 * self.tau()).collect()
    }

    /// Composite trapezoid weights on the grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let tau = self.tau();
        let mut w = vec![tau; self.steps + 1];
        w[0] = 0.5 * tau;
        w[self.steps] = 0.5 * tau;
        w
    }
}

/// `count` geometrically graded times on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || count < 2 {
        return Err(Error::InvalidInput("log-spaced grid needs 0 < lo < hi and count >= 2".into()));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}

/// Temporal profile `psi(t)` of a boundary excitation.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeProfile {
    /// Zero up to and including `t_on`, one afterwards.
    Step { t_on: f64 },
    /// Zero before `t0`, one after `t1`, C1 cubic in between.
    Ramp { t0: f64, t1: f64 },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Step { t_on } => {
                if t > t_on {
                    1.0
                } else {
                    0.0
                }
            }
            TimeProfile::Ramp { t0, t1 } => {
                if t <= t0 {
                    0.0
                } else if t >= t1 {
                    1.0
                } else {
                    let r = (t - t0) / (t1 - t0);
                    r * r * (3.0 - 2.0 * r)
                }
            }
        }
    }

    /// Derivative of the ramp; zero for a step away from its jump.
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Step { .. } => 0.0,
            TimeProfile::Ramp { t0, t1 } => {
                if t <= t0 || t >= t1 {
                    0.0
                } else {
                    let r = (t - t0) / (t1 - t0);
                    6.0 * r * (1.0 - r) / (t1 - t0)
                }
            }
        }
    }

    /// Time before which the profile vanishes.
    pub fn onset(&self) -> f64 {
        match *self {
            TimeProfile::Step { t_on } => t_on,
            TimeProfile::Ramp { t0, .. } => t0,
        }
    }
}

/// Boundary flux `eta(x) psi(t)` with `eta` given at the boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Excitation {
    pub eta: Vec<f64>,
    pub profile: TimeProfile,
}

/// Boundary values over time, `values[time][boundary node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl BoundaryTrace {
    pub fn zeros(times: Vec<f64>, nodes: usize) -> Self {
        let values = vec![vec![0.0; nodes]; times.len()];
        BoundaryTrace { times, values }
    }

    pub fn num_nodes(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    /// Time series at one boundary node.
    pub fn node_series(&self, node: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[node]).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `sum_n w_n sum_i b_i x_{n,i} y_{n,i}` with time weights `w` and boundary weights `b`.
    pub fn inner(&self, other: &BoundaryTrace, time_w: &[f64], bnd_w: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(time_w)
            .map(|((x, y), w)| {
                w * x
                    .iter()
                    .zip(y)
                    .zip(bnd_w)
                    .map(|((a, b), c)| a * b * c)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn sub(&self, other: &BoundaryTrace) -> BoundaryTrace {
        BoundaryTrace {
            times: self.times.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }

    /// Writes `t,node_0,node_1,...` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 0..self.num_nodes() {
            write!(w, ",node_{i}")?;
        }
        writeln!(w)?;
        for (t, row) in self.times.iter().zip(&self.values) {
            write!(w, "{t:.17e}")?;
            for v in row {
                write!(w, ",{v:.17e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidInput(e.to_string()))?;
            if ln == 0 || line.trim().is_empty() {
                continue;
            }
            let nums: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let nums = nums.map_err(|e| Error::InvalidInput(format!("line {}: {e}", ln + 1)))?;
            if nums.is_empty() {
                continue;
            }
            times.push(nums[0]);
            values.push(nums[1..].to_vec());
        }
        if let Some(first) = values.first() {
            let n = first.len();
            if let Some(bad) = values.iter().find(|v| v.len() != n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: bad.len(),
                });
            }
        }
        Ok(BoundaryTrace { times, values })
    }
}

/// Fully discrete time stepper for one coefficient field; the system matrix
/// `omega_0 M + K` is factored once and shared by forward and adjoint solves.
#[derive(Debug, Clone)]
pub struct CqStepper {
    grid: TimeGrid,
    alpha: f64,
    weights: Vec<f64>,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    chol: BandCholesky,
}

impl CqStepper {
    pub fn new(mesh: &Mesh, a: &ElementField, alpha: f64, grid: TimeGrid) -> Result<Self> {
        let weights = cq_weights(alpha, grid.tau(), grid.steps)?;
        let mass = assemble_mass(mesh);
        let stiffness = assemble_stiffness(mesh, a)?;
        let system = stiffness.linear_combination(1.0, &mass, weights[0]);
        let chol = BandCholesky::factor(&system)?;
        Ok(CqStepper {
            grid,
            alpha,
            weights,
            mass,
            stiffness,
            chol,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// Solves `L U = F` for `U^1..U^N` with zero initial state, where block
    /// row `n` of `L` is `(omega_0 M + K) U^n + M sum_{j>=1} omega_j U^{n-j}`.
    /// `loads[0]` is ignored; the returned states include `U^0 = 0`.
    pub fn solve_source(&self, loads: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let steps = self.grid.steps;
        check_len(steps + 1, loads.len())?;
        let nn = self.mass.dim();
        let mut states = vec![vec![0.0; nn]; steps + 1];
        let mut hist = vec![0.0; nn];
        let mut mh = vec![0.0; nn];
        for n in 1..=steps {
            check_len(nn, loads[n].len())?;
            hist.iter_mut().for_each(|v| *v = 0.0);
            for j in 1..n {
                let wj = self.weights[j];
                for (h, u) in hist.iter_mut().zip(&states[n - j]) {
                    *h += wj * u;
                }
            }
            self.mass.mul_vec_into(&hist, &mut mh);
            let mut rhs: Vec<f64> = loads[n].iter().zip(&mh).map(|(f, m)| f - m).collect();
            self.chol.solve_in_place(&mut rhs);
            states[n] = rhs;
        }
        Ok(states)
    }

    /// Solves the transposed system `L^T V = G` backward in time.
    /// `loads[0]` is ignored and `V^0` is returned as zero.
    pub fn solve_source_adjoint(&self, loads: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let steps = self.grid.steps;
        check_len(steps + 1, loads.len())?;
        let nn = self.mass.dim();
        let mut states = vec![vec![0.0; nn]; steps + 1];
        let mut hist = vec![0.0; nn];
        let mut mh = vec![0.0; nn];
        for n in (1..=steps).rev() {
            check_len(nn, loads[n].len())?;
            hist.iter_mut().for_each(|v| *v = 0.0);
            for m in n + 1..=steps {
                let wj = self.weights[m - n];
                for (h, v) in hist.iter_mut().zip(&states[m]) {
                    *h += wj * v;
                }
            }
            self.mass.mul_vec_into(&hist, &mut mh);
            let mut rhs: Vec<f64> = loads[n].iter().zip(&mh).map(|(g, m)| g - m).collect();
            self.chol.solve_in_place(&mut rhs);
            states[n] = rhs;
        }
        Ok(states)
    }

    /// Right-hand sides `F^n = M f + sum_m psi_m(t_n) b_m + s_{n-1} M u0`,
    /// `s_k = sum_{j<=k} omega_j`, that turn the forward problem into
    /// [`CqStepper::solve_source`] form.
    pub fn forward_loads(
        &self,
        mesh: &Mesh,
        u0: &[f64],
        f: &[f64],
        excitations: &[Excitation],
    ) -> Result<Vec<Vec<f64>>> {
        let nn = mesh.num_nodes();
        check_len(nn, u0.len())?;
        check_len(nn, f.len())?;
        let mf = self.mass.mul_vec(f);
        let mu0 = self.mass.mul_vec(u0);
        let bl: Vec<Vec<f64>> = excitations
            .iter()
            .map(|e| assemble_neumann_load(mesh, &e.eta, EdgeQuadrature::Trapezoid))
            .collect::<Result<_>>()?;
        let times = self.grid.times();
        let mut partial = 0.0;
        let mut loads = vec![vec![0.0; nn]];
        for n in 1..=self.grid.steps {
            partial += self.weights[n - 1];
            let mut l: Vec<f64> = mf.iter().zip(&mu0).map(|(a, b)| a + partial * b).collect();
            for (e, b) in excitations.iter().zip(&bl) {
                let psi = e.profile.eval(times[n]);
                if psi != 0.0 {
                    for (x, y) in l.iter_mut().zip(b) {
                        *x += psi * y;
                    }
                }
            }
            loads.push(l);
        }
        Ok(loads)
    }

    /// Forward solve; returns all states `U^0..U^N`.
    pub fn solve_forward(
        &self,
        mesh: &Mesh,
        u0: &[f64],
        f: &[f64],
        excitations: &[Excitation],
    ) -> Result<Vec<Vec<f64>>> {
        let loads = self.forward_loads(mesh, u0, f, excitations)?;
        let mut states = self.solve_source(&loads)?;
        if u0.iter().any(|v| *v != 0.0) {
            // solve_source treats U^0 as part of the load; restore it.
            states[0] = u0.to_vec();
        }
        Ok(states)
    }

    /// Adjoint solve for the boundary misfit `1/2 sum_n w_n |U^n - h^n|_B^2`.
    ///
    /// The load at step `n` is `(w_n / tau) B r^n`, so that the derivative of
    /// the misfit with respect to an element coefficient reads
    /// `-tau sum_n area grad U^n . grad V^n`.
    pub fn solve_adjoint(&self, mesh: &Mesh, residual: &BoundaryTrace, bnd_w: &[f64]) -> Result<Vec<Vec<f64>>> {
        let loads = self.adjoint_loads(mesh, residual, bnd_w)?;
        self.solve_source_adjoint(&loads)
    }

    fn adjoint_loads(&self, mesh: &Mesh, residual: &BoundaryTrace, bnd_w: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len(self.grid.steps + 1, residual.values.len())?;
        check_len(mesh.boundary_nodes().len(), bnd_w.len())?;
        let tw = self.grid.trapezoid_weights();
        let tau = self.grid.tau();
        let nn = mesh.num_nodes();
        Ok(residual
            .values
            .iter()
            .zip(&tw)
            .map(|(r, w)| {
                let mut g = vec![0.0; nn];
                for (k, &v) in mesh.boundary_nodes().iter().enumerate() {
                    g[v] = w / tau * bnd_w[k] * r[k];
                }
                g
            })
            .collect())
    }

    /// Gradient of `<trace(U), r>` (time and boundary weighted) with respect
    /// to the inputs, given the adjoint states for the residual `r`.
    pub fn input_sensitivity(
        &self,
        mesh: &Mesh,
        adjoint: &[Vec<f64>],
        residual0: &[f64],
        bnd_w: &[f64],
    ) -> Result<InputSensitivity> {
        let steps = self.grid.steps;
        check_len(steps + 1, adjoint.len())?;
        let tau = self.grid.tau();
        let nn = mesh.num_nodes();
        let mut sum_v = vec![0.0; nn];
        let mut weighted_v = vec![0.0; nn];
        let mut partial = 0.0;
        let mut flux = vec![vec![0.0; mesh.boundary_nodes().len()]];
        for n in 1..=steps {
            partial += self.weights[n - 1];
            for i in 0..nn {
                sum_v[i] += adjoint[n][i];
                weighted_v[i] += partial * adjoint[n][i];
            }
            flux.push(
                mesh.boundary_nodes()
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| tau * bnd_w[k] * adjoint[n][v])
                    .collect(),
            );
        }
        let mut du0: Vec<f64> = self.mass.mul_vec(&weighted_v).iter().map(|v| tau * v).collect();
        let w0 = self.grid.trapezoid_weights()[0];
        for (k, &v) in mesh.boundary_nodes().iter().enumerate() {
            du0[v] += w0 * bnd_w[k] * residual0[k];
        }
        let df = self.mass.mul_vec(&sum_v).iter().map(|v| tau * v).collect();
        Ok(InputSensitivity { du0, df, dflux: flux })
    }
}

/// Derivatives of a weighted trace functional with respect to the inputs.
#[derive(Debug, Clone)]
pub struct InputSensitivity {
    pub du0: Vec<f64>,
    pub df: Vec<f64>,
    /// Per step, with respect to the boundary nodal flux values (`[0]` unused).
    pub dflux: Vec<Vec<f64>>,
}

/// Forward solve with the boundary flux given per step at the boundary
/// nodes (`flux[0]` unused).
pub fn solve_forward_flux(
    stepper: &CqStepper,
    mesh: &Mesh,
    u0: &[f64],
    f: &[f64],
    flux: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let steps = stepper.grid().steps;
    check_len(steps + 1, flux.len())?;
    let mut loads = stepper.forward_loads(mesh, u0, f, &[])?;
    for n in 1..=steps {
        let b = assemble_neumann_load(mesh, &flux[n], EdgeQuadrature::Trapezoid)?;
        for (l, v) in loads[n].iter_mut().zip(&b) {
            *l += v;
        }
    }
    let mut states = stepper.solve_source(&loads)?;
    states[0] = u0.to_vec();
    Ok(states)
}

/// Restricts nodal states to the boundary.
pub fn boundary_trace(mesh: &Mesh, grid: &TimeGrid, states: &[Vec<f64>]) -> BoundaryTrace {
    BoundaryTrace {
        times: grid.times(),
        values: states.iter().map(|u| mesh.restrict_to_boundary(u)).collect(),
    }
}

/// Derivative of the misfit with respect to each element coefficient,
/// `-tau sum_n area_e grad U^n . grad V^n`.
pub fn coefficient_sensitivity(mesh: &Mesh, tau: f64, states: &[Vec<f64>], adjoint: &[Vec<f64>]) -> Vec<f64> {
    let mut g = vec![0.0; mesh.num_triangles()];
    for (u, v) in states.iter().zip(adjoint).skip(1) {
        for (e, ge) in g.iter_mut().enumerate() {
            let gu = mesh.element_gradient(e, u);
            let gv = mesh.element_gradient(e, v);
            *ge -= tau * mesh.area(e) * (gu[0] * gv[0] + gu[1] * gv[1]);
        }
    }
    g
}

/// CQ trajectory of one mode: `D^alpha u + lambda u = f + b psi_n`.
pub fn scalar_cq(lambda: f64, weights: &[f64], u0: f64, f: f64, forcing: &[f64]) -> Vec<f64> {
    let steps = forcing.len().saturating_sub(1);
    let mut u = vec![u0; steps + 1];
    for n in 1..=steps {
        let hist: f64 = (1..=n).map(|j| weights[j] * (u[n - j] - u0)).sum();
        u[n] = (f + forcing[n] + weights[0] * u0 - hist) / (weights[0] + lambda);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_at_order_one_are_backward_difference() {
        let w = cq_weights(1.0, 0.1, 4).unwrap();
        assert!((w[0] - 10.0).abs() < 1e-12);
        assert!((w[1] + 10.0).abs() < 1e-12);
        assert!(w[2..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn weights_reject_bad_input() {
        assert!(cq_weights(0.0, 0.1, 3).is_err());
        assert!(cq_weights(1.5, 0.1, 3).is_err());
        assert!(cq_weights(0.5, 0.0, 3).is_err());
    }

    #[test]
    fn step_profile_is_off_at_onset() {
        let p = TimeProfile::Step { t_on: 0.5 };
        assert_eq!(p.eval(0.5), 0.0);
        assert_eq!(p.eval(0.5 + 1e-12), 1.0);
    }

    #[test]
    fn log_spaced_endpoints() {
        let t = log_spaced(1e-9, 1e-7, 30).unwrap();
        assert_eq!(t.len(), 30);
        assert!((t[0] - 1e-9).abs() < 1e-24);
        assert_eq!(t[29], 1e-7);
        assert!(t.windows(2).all(|w| w[1] / w[0] > 1.0));
    }

    #[test]
    fn trace_csv_round_trip() {
        let tr = BoundaryTrace {
            times: vec![0.0, 0.5],
            values: vec![vec![1.0, -2.5], vec![3.25e-9, 4.0]],
        };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,node_0,node_1\n"));
        let back = BoundaryTrace::read_csv(&buf[..]).unwrap();
        assert_eq!(back, tr);
    }
}
