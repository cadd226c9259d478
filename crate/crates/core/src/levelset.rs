//! Level-set representation of a two-valued diffusion coefficient, the
//! regularised boundary misfit with its adjoint gradient, redistancing and
//! the descent loop.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::meshfem::{ElementField, Mesh};
use crate::timefrac::{boundary_trace, coefficient_sensitivity, BoundaryTrace, CqStepper, Excitation, TimeGrid};

/// Inclusion geometry. Signed distances are positive inside.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Disc { center: [f64; 2], radius: f64 },
    Square { center: [f64; 2], side: f64 },
    /// Simple polygon, vertices in order.
    Polygon(Vec<[f64; 2]>),
    Union(Vec<Shape>),
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Disc { radius, .. } if !(*radius > 0.0) => {
                Err(Error::InvalidInput(format!("disc radius must be positive, got {radius}")))
            }
            Shape::Square { side, .. } if !(*side > 0.0) => {
                Err(Error::InvalidInput(format!("square side must be positive, got {side}")))
            }
            Shape::Polygon(v) if v.len() < 3 => Err(Error::InvalidInput("polygon needs at least 3 vertices".into())),
            Shape::Polygon(v) if polygon_area(v).abs() == 0.0 => {
                Err(Error::InvalidInput("polygon has zero area".into()))
            }
            Shape::Union(parts) if parts.is_empty() => Err(Error::InvalidInput("empty union".into())),
            Shape::Union(parts) => parts.iter().try_for_each(|s| s.validate()),
            _ => Ok(()),
        }
    }

    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        match self {
            Shape::Disc { center, radius } => {
                radius - ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt()
            }
            Shape::Square { center, side } => {
                let qx = (p[0] - center[0]).abs() - 0.5 * side;
                let qy = (p[1] - center[1]).abs() - 0.5 * side;
                let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
                let inside = qx.max(qy).min(0.0);
                -(outside + inside)
            }
            Shape::Polygon(v) => {
                let m = v.len();
                let d = (0..m)
                    .map(|i| segment_distance(p, v[i], v[(i + 1) % m]))
                    .fold(f64::INFINITY, f64::min);
                if point_in_polygon(p, v) {
                    d
                } else {
                    -d
                }
            }
            Shape::Union(parts) => parts
                .iter()
                .map(|s| s.signed_distance(p))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.signed_distance(p) > 0.0
    }

    /// Area of the shape; union parts are assumed disjoint.
    pub fn area(&self) -> f64 {
        match self {
            Shape::Disc { radius, .. } => PI * radius * radius,
            Shape::Square { side, .. } => side * side,
            Shape::Polygon(v) => polygon_area(v).abs(),
            Shape::Union(parts) => parts.iter().map(|s| s.area()).sum(),
        }
    }
}

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let m = v.len();
    0.5 * (0..m)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % m]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

fn point_in_polygon(p: [f64; 2], v: &[[f64; 2]]) -> bool {
    let m = v.len();
    let mut inside = false;
    let mut j = m - 1;
    for i in 0..m {
        let (a, b) = (v[i], v[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Nodal signed distance of `shape`.
pub fn init_levelset(mesh: &Mesh, shape: &Shape) -> Result<Vec<f64>> {
    shape.validate()?;
    Ok(mesh.nodes().iter().map(|&p| shape.signed_distance(p)).collect())
}

/// `H_eps(x) = arctan(x / eps) / pi + 1/2`.
pub fn heaviside(x: f64, eps: f64) -> f64 {
    (x / eps).atan() / PI + 0.5
}

/// `delta_eps(x) = eps / (pi (x^2 + eps^2))`, the derivative of [`heaviside`].
pub fn dirac(x: f64, eps: f64) -> f64 {
    eps / (PI * (x * x + eps * eps))
}

/// Level-set values at the element centroids.
pub fn centroid_values(mesh: &Mesh, phi: &[f64]) -> Vec<f64> {
    mesh.triangles()
        .iter()
        .map(|t| (phi[t[0]] + phi[t[1]] + phi[t[2]]) / 3.0)
        .collect()
}

/// `a = a1 H_eps(phi) + a2 (1 - H_eps(phi))` evaluated at the centroids.
pub fn coeff_from_levelset(mesh: &Mesh, phi: &[f64], a1: f64, a2: f64, eps: f64) -> Result<ElementField> {
    check_len(mesh.num_nodes(), phi.len())?;
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(Error::InvalidInput(format!("coefficient values must be positive, got {a1}, {a2}")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("smoothing width must be positive, got {eps}")));
    }
    ElementField::new(
        centroid_values(mesh, phi)
            .into_iter()
            .map(|p| {
                let hv = heaviside(p, eps);
                a1 * hv + a2 * (1.0 - hv)
            })
            .collect(),
    )
}

/// Default smoothing of `|grad a|`: `1e-8 |a2 - a1| / h`.
pub fn tv_smoothing(mesh: &Mesh, a1: f64, a2: f64) -> f64 {
    1e-8 * (a2 - a1).abs() / mesh.h()
}

/// Smoothed total variation of an element field and its gradient.
///
/// The field is first recovered at the nodes by area-weighted averaging;
/// the variation is `sum_e area_e sqrt(|grad P a|_e^2 + eps_tv^2)`.
pub fn total_variation(mesh: &Mesh, a: &[f64], eps_tv: f64) -> (f64, Vec<f64>) {
    let nn = mesh.num_nodes();
    let mut node_area = vec![0.0; nn];
    let mut pa = vec![0.0; nn];
    for (e, t) in mesh.triangles().iter().enumerate() {
        for &v in t {
            node_area[v] += mesh.area(e);
            pa[v] += mesh.area(e) * a[e];
        }
    }
    for (p, s) in pa.iter_mut().zip(&node_area) {
        *p /= s;
    }
    let mut tv = 0.0;
    let mut d_pa = vec![0.0; nn];
    for (e, t) in mesh.triangles().iter().enumerate() {
        let g = mesh.element_gradient(e, &pa);
        let s = (g[0] * g[0] + g[1] * g[1] + eps_tv * eps_tv).sqrt();
        let area = mesh.area(e);
        tv += area * s;
        if s > 0.0 {
            let grads = mesh.basis_gradients(e);
            for k in 0..3 {
                d_pa[t[k]] += area * (g[0] * grads[k][0] + g[1] * grads[k][1]) / s;
            }
        }
    }
    let grad = mesh
        .triangles()
        .iter()
        .enumerate()
        .map(|(e, t)| mesh.area(e) * t.iter().map(|&v| d_pa[v] / node_area[v]).sum::<f64>())
        .collect();
    (tv, grad)
}

/// Lumped-mass `L2(Omega)` norm of a nodal field.
pub fn nodal_l2_norm(mesh: &Mesh, u: &[f64]) -> f64 {
    mesh.lumped_mass().iter().zip(u).map(|(m, v)| m * v * v).sum::<f64>().sqrt()
}

/// Misfit of the boundary trace for a level-set coefficient, with total
/// variation regularisation.
#[derive(Debug, Clone)]
pub struct RecoveryProblem<'a> {
    pub mesh: &'a Mesh,
    pub alpha: f64,
    pub grid: TimeGrid,
    pub excitations: Vec<Excitation>,
    /// Data on all boundary nodes; unobserved nodes carry zero weight.
    pub data: BoundaryTrace,
    /// Boundary quadrature weights restricted to the observed part.
    pub observed: Vec<f64>,
    pub beta: f64,
    /// Heaviside width.
    pub eps: f64,
    /// Smoothing of `|grad a|`; `None` uses [`tv_smoothing`].
    pub eps_tv: Option<f64>,
}

/// Objective value and the forward solution it was computed from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub j: f64,
    pub misfit: f64,
    pub tv: f64,
    pub trace: BoundaryTrace,
    states: Vec<Vec<f64>>,
    stepper: CqStepper,
    field: Vec<f64>,
}

/// Derivatives of the objective.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub j: f64,
    pub misfit: f64,
    pub tv: f64,
    /// With respect to each element coefficient.
    pub d_a: Vec<f64>,
    /// With respect to the nodal level-set values.
    pub d_phi: Vec<f64>,
    /// `L2` (lumped-mass) representative of `d_phi`, used as the descent
    /// direction.
    pub d_phi_l2: Vec<f64>,
    pub d_a1: f64,
    pub d_a2: f64,
}

impl<'a> RecoveryProblem<'a> {
    pub fn new(
        mesh: &'a Mesh,
        alpha: f64,
        grid: TimeGrid,
        excitations: Vec<Excitation>,
        data: BoundaryTrace,
        beta: f64,
    ) -> Result<Self> {
        check_len(grid.steps + 1, data.values.len())?;
        for row in &data.values {
            check_len(mesh.boundary_nodes().len(), row.len())?;
        }
        if !(beta >= 0.0) {
            return Err(Error::InvalidInput(format!("beta must be non-negative, got {beta}")));
        }
        Ok(RecoveryProblem {
            mesh,
            alpha,
            grid,
            excitations,
            data,
            observed: mesh.boundary_weights(),
            beta,
            eps: mesh.h(),
            eps_tv: None,
        })
    }

    /// Restricts the misfit to the boundary nodes flagged `true`.
    pub fn with_observed(mut self, mask: &[bool]) -> Result<Self> {
        check_len(self.mesh.boundary_nodes().len(), mask.len())?;
        let w = self.mesh.boundary_weights();
        self.observed = w.iter().zip(mask).map(|(w, &m)| if m { *w } else { 0.0 }).collect();
        Ok(self)
    }

    pub fn coefficient(&self, phi: &[f64], a1: f64, a2: f64) -> Result<ElementField> {
        coeff_from_levelset(self.mesh, phi, a1, a2, self.eps)
    }

    fn eps_tv(&self, a1: f64, a2: f64) -> f64 {
        self.eps_tv.unwrap_or_else(|| tv_smoothing(self.mesh, a1, a2))
    }

    pub fn evaluate(&self, phi: &[f64], a1: f64, a2: f64) -> Result<Evaluation> {
        let a = self.coefficient(phi, a1, a2)?;
        let stepper = CqStepper::new(self.mesh, &a, self.alpha, self.grid)?;
        let zero = vec![0.0; self.mesh.num_nodes()];
        let states = stepper.solve_forward(self.mesh, &zero, &zero, &self.excitations)?;
        let trace = boundary_trace(self.mesh, &self.grid, &states);
        let r = trace.sub(&self.data);
        let misfit = 0.5 * r.inner(&r, &self.grid.trapezoid_weights(), &self.observed);
        let tv = if self.beta > 0.0 {
            total_variation(self.mesh, a.values(), self.eps_tv(a1, a2)).0
        } else {
            0.0
        };
        Ok(Evaluation {
            j: misfit + self.beta * tv,
            misfit,
            tv,
            trace,
            states,
            stepper,
            field: a.values().to_vec(),
        })
    }

    pub fn gradient(&self, phi: &[f64], a1: f64, a2: f64) -> Result<Gradient> {
        let ev = self.evaluate(phi, a1, a2)?;
        self.gradient_from(phi, a1, a2, &ev)
    }

    /// Gradient reusing the forward solution of `ev`, which must have been
    /// computed at the same `(phi, a1, a2)`.
    pub fn gradient_from(&self, phi: &[f64], a1: f64, a2: f64, ev: &Evaluation) -> Result<Gradient> {
        let r = ev.trace.sub(&self.data);
        let adjoint = ev.stepper.solve_adjoint(self.mesh, &r, &self.observed)?;
        let mut d_a = coefficient_sensitivity(self.mesh, self.grid.tau(), &ev.states, &adjoint);
        if self.beta > 0.0 {
            let (_, d_tv) = total_variation(self.mesh, &ev.field, self.eps_tv(a1, a2));
            for (g, t) in d_a.iter_mut().zip(&d_tv) {
                *g += self.beta * t;
            }
        }
        let pc = centroid_values(self.mesh, phi);
        let mut d_phi = vec![0.0; self.mesh.num_nodes()];
        let (mut d_a1, mut d_a2) = (0.0, 0.0);
        for (e, t) in self.mesh.triangles().iter().enumerate() {
            let hv = heaviside(pc[e], self.eps);
            d_a1 += d_a[e] * hv;
            d_a2 += d_a[e] * (1.0 - hv);
            let share = d_a[e] * (a1 - a2) * dirac(pc[e], self.eps) / 3.0;
            for &v in t {
                d_phi[v] += share;
            }
        }
        let d_phi_l2 = d_phi
            .iter()
            .zip(self.mesh.lumped_mass())
            .map(|(g, m)| g / m)
            .collect();
        Ok(Gradient {
            j: ev.j,
            misfit: ev.misfit,
            tv: ev.tv,
            d_a,
            d_phi,
            d_phi_l2,
            d_a1,
            d_a2,
        })
    }
}

/// Settings for [`reinitialize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinitOptions {
    pub max_sweeps: usize,
    /// Pseudo-time step as a multiple of `h`.
    pub cfl: f64,
    /// Target RMS of `|grad d| - 1` away from the interface.
    pub rms_tol: f64,
    /// If set, also require the largest update to fall below this multiple
    /// of the pseudo-time step (iterate towards the steady state).
    pub update_tol: Option<f64>,
}

impl Default for ReinitOptions {
    fn default() -> Self {
        ReinitOptions {
            max_sweeps: 200,
            cfl: 0.5,
            rms_tol: 0.1,
            update_tol: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reinitialized {
    pub phi: Vec<f64>,
    pub sweeps: usize,
    /// RMS of `|grad d| - 1` over elements without interface nodes.
    pub rms: f64,
    pub converged: bool,
}

/// Nodes with a mesh neighbour of the opposite sign (or a zero value).
pub fn interface_nodes(mesh: &Mesh, phi: &[f64]) -> Vec<bool> {
    let nb = mesh.neighbours();
    (0..mesh.num_nodes())
        .map(|i| phi[i] == 0.0 || nb[i].iter().any(|&j| (phi[j] > 0.0) != (phi[i] > 0.0)))
        .collect()
}

/// Redistancing by pseudo-time iteration of `d_t + sign(phi0)(|grad d| - 1) = 0`
/// with a Godunov upwind Hamiltonian and second-order ENO differences on the
/// node grid. Nodes next to the zero contour use the subcell fix of Russo and
/// Smereka, which keeps the contour in place.
pub fn reinitialize(mesh: &Mesh, phi0: &[f64], opts: &ReinitOptions) -> Reinitialized {
    let n = mesh.n();
    let m = n + 1;
    let h = mesh.h();
    let dt = opts.cfl * h;
    let idx = |i: usize, j: usize| i + j * m;
    let near = interface_nodes(mesh, phi0);
    let sign: Vec<f64> = phi0.iter().map(|p| p / (p * p + h * h).sqrt()).collect();
    // One-sided differences; a missing side copies the other one.
    let diffs = |d: &[f64], i: usize, j: usize| -> [f64; 4] {
        let c = d[idx(i, j)];
        let xp = if i < n { Some((d[idx(i + 1, j)] - c) / h) } else { None };
        let xm = if i > 0 { Some((c - d[idx(i - 1, j)]) / h) } else { None };
        let yp = if j < n { Some((d[idx(i, j + 1)] - c) / h) } else { None };
        let ym = if j > 0 { Some((c - d[idx(i, j - 1)]) / h) } else { None };
        [
            xm.or(xp).unwrap_or(0.0),
            xp.or(xm).unwrap_or(0.0),
            ym.or(yp).unwrap_or(0.0),
            yp.or(ym).unwrap_or(0.0),
        ]
    };
    // Second-order ENO corrections, dropped where the stencil leaves the grid.
    let minmod = |a: f64, b: f64| if a * b <= 0.0 { 0.0 } else if a.abs() < b.abs() { a } else { b };
    let eno_diffs = |d: &[f64], i: usize, j: usize| -> [f64; 4] {
        let [mut xm, mut xp, mut ym, mut yp] = diffs(d, i, j);
        let at = |i: isize, j: isize| -> Option<f64> {
            (i >= 0 && j >= 0 && i <= n as isize && j <= n as isize).then(|| d[idx(i as usize, j as usize)])
        };
        let second = |i: isize, j: isize, di: isize, dj: isize| -> Option<f64> {
            Some((at(i + di, j + dj)? - 2.0 * at(i, j)? + at(i - di, j - dj)?) / (h * h))
        };
        let (ii, jj) = (i as isize, j as isize);
        if let (Some(_), Some(c), Some(l)) = (at(ii - 1, jj), second(ii, jj, 1, 0), second(ii - 1, jj, 1, 0)) {
            xm += 0.5 * h * minmod(l, c);
        }
        if let (Some(_), Some(c), Some(r)) = (at(ii + 1, jj), second(ii, jj, 1, 0), second(ii + 1, jj, 1, 0)) {
            xp -= 0.5 * h * minmod(c, r);
        }
        if let (Some(_), Some(c), Some(l)) = (at(ii, jj - 1), second(ii, jj, 0, 1), second(ii, jj - 1, 0, 1)) {
            ym += 0.5 * h * minmod(l, c);
        }
        if let (Some(_), Some(c), Some(r)) = (at(ii, jj + 1), second(ii, jj, 0, 1), second(ii, jj + 1, 0, 1)) {
            yp -= 0.5 * h * minmod(c, r);
        }
        [xm, xp, ym, yp]
    };
    // Distance estimates at interface nodes from the initial field.
    let subcell: Vec<f64> = (0..mesh.num_nodes())
        .map(|v| {
            if !near[v] {
                return 0.0;
            }
            let (i, j) = (v % m, v / m);
            let [xm, xp, ym, yp] = diffs(phi0, i, j);
            let central = ((0.5 * (xm + xp)).powi(2) + (0.5 * (ym + yp)).powi(2)).sqrt();
            let slope = central
                .max(xm.abs())
                .max(xp.abs())
                .max(ym.abs())
                .max(yp.abs())
                .max(f64::EPSILON);
            phi0[v] / slope
        })
        .collect();
    let free_elements: Vec<usize> = mesh
        .triangles()
        .iter()
        .enumerate()
        .filter(|(_, t)| t.iter().all(|&v| !near[v]))
        .map(|(e, _)| e)
        .collect();
    let rms_of = |d: &[f64]| -> f64 {
        if free_elements.is_empty() {
            return 0.0;
        }
        let s: f64 = free_elements
            .iter()
            .map(|&e| {
                let g = mesh.element_gradient(e, d);
                ((g[0] * g[0] + g[1] * g[1]).sqrt() - 1.0).powi(2)
            })
            .sum();
        (s / free_elements.len() as f64).sqrt()
    };
    let mut d = phi0.to_vec();
    let mut next = d.clone();
    let mut sweeps = 0;
    let mut converged = false;
    let mut max_update = f64::INFINITY;
    loop {
        let steady = opts.update_tol.map_or(true, |tol| max_update < tol * dt);
        if steady && rms_of(&d) <= opts.rms_tol {
            converged = true;
            break;
        }
        if sweeps == opts.max_sweeps {
            break;
        }
        sweeps += 1;
        max_update = 0.0;
        for j in 0..m {
            for i in 0..m {
                let v = idx(i, j);
                let upd = if near[v] {
                    let s = if phi0[v] > 0.0 {
                        1.0
                    } else if phi0[v] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    (dt / h) * (s * d[v].abs() - subcell[v])
                } else {
                    let [a, b, c, e] = eno_diffs(&d, i, j);
                    let g = if sign[v] > 0.0 {
                        (a.max(0.0).powi(2).max(b.min(0.0).powi(2)) + c.max(0.0).powi(2).max(e.min(0.0).powi(2))).sqrt()
                    } else {
                        (a.min(0.0).powi(2).max(b.max(0.0).powi(2)) + c.min(0.0).powi(2).max(e.max(0.0).powi(2))).sqrt()
                    };
                    dt * sign[v] * (g - 1.0)
                };
                next[v] = d[v] - upd;
                max_update = max_update.max(upd.abs());
            }
        }
        std::mem::swap(&mut d, &mut next);
    }
    let rms = rms_of(&d);
    if !converged {
        log::warn!("reinitialisation stopped after {sweeps} sweeps (rms {rms:.3})");
    }
    Reinitialized {
        phi: d,
        sweeps,
        rms,
        converged,
    }
}

/// Zero contour of a nodal field as polylines (marching triangles).
pub fn zero_contours(mesh: &Mesh, phi: &[f64]) -> Vec<Vec<[f64; 2]>> {
    let nodes = mesh.nodes();
    let point = |a: usize, b: usize| {
        let t = phi[a] / (phi[a] - phi[b]);
        [
            nodes[a][0] + t * (nodes[b][0] - nodes[a][0]),
            nodes[a][1] + t * (nodes[b][1] - nodes[a][1]),
        ]
    };
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut segments: Vec<[(usize, usize); 2]> = Vec::new();
    let mut coords: HashMap<(usize, usize), [f64; 2]> = HashMap::new();
    for t in mesh.triangles() {
        let crossing: Vec<(usize, usize)> = [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
            .into_iter()
            .filter(|&(a, b)| (phi[a] > 0.0) != (phi[b] > 0.0))
            .collect();
        if crossing.len() == 2 {
            for &(a, b) in &crossing {
                coords.entry(key(a, b)).or_insert_with(|| point(a, b));
            }
            segments.push([key(crossing[0].0, crossing[0].1), key(crossing[1].0, crossing[1].1)]);
        }
    }
    let mut by_point: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        for p in seg {
            by_point.entry(*p).or_default().push(s);
        }
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let walk = |start: (usize, usize), first: usize, used: &mut Vec<bool>| {
        let mut chain = vec![start];
        let mut seg = first;
        let mut at = start;
        loop {
            used[seg] = true;
            let nxt = if segments[seg][0] == at { segments[seg][1] } else { segments[seg][0] };
            chain.push(nxt);
            at = nxt;
            match by_point[&at].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        chain
    };
    // Open chains start at points used once (domain boundary), then loops.
    let mut starts: Vec<(usize, usize)> = by_point
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(p, _)| *p)
        .collect();
    starts.sort();
    for p in starts {
        let s = by_point[&p][0];
        if !used[s] {
            lines.push(walk(p, s, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            let p = segments[s][0];
            lines.push(walk(p, s, &mut used));
        }
    }
    lines
        .into_iter()
        .map(|c| c.into_iter().map(|p| coords[&p]).collect())
        .collect()
}

/// Area of `{phi > 0}` symmetric-difference `shape`, by classifying element
/// centroids.
pub fn symmetric_difference(mesh: &Mesh, phi: &[f64], shape: &Shape) -> f64 {
    let pc = centroid_values(mesh, phi);
    (0..mesh.num_triangles())
        .filter(|&e| (pc[e] > 0.0) != shape.contains(mesh.centroid(e)))
        .map(|e| mesh.area(e))
        .sum()
}

/// Settings for [`recover_interface`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryOptions {
    pub iterations: usize,
    pub gamma: f64,
    pub gamma_a1: f64,
    pub gamma_a2: f64,
    /// Halve the step while the objective increases.
    pub monotone: bool,
    pub max_halvings: usize,
    /// Relative `L2` change since the last redistancing that triggers a new one.
    pub reinit_threshold: f64,
    pub reinit: ReinitOptions,
    /// Contour snapshot period; 0 keeps only the first and last.
    pub snapshot_every: usize,
    /// Stop when the `L2` norm of the level-set gradient is at most this.
    pub grad_tol: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions {
            iterations: 100,
            gamma: 1.0,
            gamma_a1: 0.0,
            gamma_a2: 0.0,
            monotone: false,
            max_halvings: 20,
            reinit_threshold: 0.1,
            reinit: ReinitOptions::default(),
            snapshot_every: 100,
            grad_tol: 0.0,
        }
    }
}

/// One line of the convergence log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub j: f64,
    pub misfit: f64,
    pub tv: f64,
    pub grad_norm: f64,
    pub a1: f64,
    pub a2: f64,
    /// Step actually taken to reach this iterate.
    pub step: f64,
    pub reinit: bool,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub iter: usize,
    pub contours: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Iteration budget exhausted.
    Budget,
    /// Gradient below `grad_tol`.
    Stationary,
    /// No decrease after the maximal number of halvings.
    NoDescent,
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub phi: Vec<f64>,
    pub a1: f64,
    pub a2: f64,
    pub history: Vec<IterationRecord>,
    pub snapshots: Vec<Snapshot>,
    pub stop: StopReason,
}

fn finite(j: f64, iteration: usize) -> Result<()> {
    if j.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration })
    }
}

/// Gradient descent on the level set, with staggered updates of the two
/// coefficient values and redistancing when the level set has drifted.
pub fn recover_interface(
    problem: &RecoveryProblem,
    phi0: &[f64],
    a1: f64,
    a2: f64,
    opts: &RecoveryOptions,
) -> Result<RecoveryResult> {
    let mesh = problem.mesh;
    check_len(mesh.num_nodes(), phi0.len())?;
    let (mut a1, mut a2) = (a1, a2);
    let mut phi = phi0.to_vec();
    let mut anchor = phi.clone();
    let mut ev = problem.evaluate(&phi, a1, a2)?;
    finite(ev.j, 0)?;
    let mut grad = problem.gradient_from(&phi, a1, a2, &ev)?;
    let record = |iter: usize, g: &Gradient, a1: f64, a2: f64, step: f64, reinit: bool| IterationRecord {
        iter,
        j: g.j,
        misfit: g.misfit,
        tv: g.tv,
        grad_norm: nodal_l2_norm(mesh, &g.d_phi_l2),
        a1,
        a2,
        step,
        reinit,
    };
    let mut history = vec![record(0, &grad, a1, a2, 0.0, false)];
    let mut snapshots = vec![Snapshot {
        iter: 0,
        contours: zero_contours(mesh, &phi),
    }];
    let mut stop = StopReason::Budget;
    for k in 1..=opts.iterations {
        if history.last().unwrap().grad_norm <= opts.grad_tol {
            stop = StopReason::Stationary;
            break;
        }
        let mut gamma = opts.gamma;
        let mut accepted = None;
        let attempts = if opts.monotone { opts.max_halvings + 1 } else { 1 };
        for _ in 0..attempts {
            let cand: Vec<f64> = phi.iter().zip(&grad.d_phi_l2).map(|(p, g)| p - gamma * g).collect();
            let e = problem.evaluate(&cand, a1, a2)?;
            finite(e.j, k)?;
            if !opts.monotone || e.j <= grad.j {
                accepted = Some((cand, e));
                break;
            }
            gamma *= 0.5;
        }
        let Some((mut new_phi, mut new_ev)) = accepted else {
            stop = StopReason::NoDescent;
            break;
        };
        let mut did_reinit = false;
        let ref_norm = nodal_l2_norm(mesh, &anchor);
        let diff: Vec<f64> = new_phi.iter().zip(&anchor).map(|(a, b)| a - b).collect();
        if ref_norm > 0.0 && nodal_l2_norm(mesh, &diff) > opts.reinit_threshold * ref_norm {
            let r = reinitialize(mesh, &new_phi, &opts.reinit);
            let e = problem.evaluate(&r.phi, a1, a2)?;
            finite(e.j, k)?;
            // Under monotone descent a redistancing that raises J is skipped
            // and retried at the next iteration.
            if !opts.monotone || e.j <= grad.j {
                new_phi = r.phi;
                new_ev = e;
                anchor = new_phi.clone();
                did_reinit = true;
            }
        }
        if opts.gamma_a1 != 0.0 || opts.gamma_a2 != 0.0 {
            let g = problem.gradient_from(&new_phi, a1, a2, &new_ev)?;
            let mut scale = 1.0;
            for _ in 0..attempts.max(1) {
                let (b1, b2) = (a1 - scale * opts.gamma_a1 * g.d_a1, a2 - scale * opts.gamma_a2 * g.d_a2);
                if b1 > 0.0 && b2 > 0.0 {
                    let e = problem.evaluate(&new_phi, b1, b2)?;
                    finite(e.j, k)?;
                    if !opts.monotone || e.j <= new_ev.j {
                        a1 = b1;
                        a2 = b2;
                        new_ev = e;
                        break;
                    }
                }
                scale *= 0.5;
            }
        }
        phi = new_phi;
        ev = new_ev;
        grad = problem.gradient_from(&phi, a1, a2, &ev)?;
        history.push(record(k, &grad, a1, a2, gamma, did_reinit));
        if opts.snapshot_every > 0 && k % opts.snapshot_every == 0 {
            snapshots.push(Snapshot {
                iter: k,
                contours: zero_contours(mesh, &phi),
            });
        }
    }
    let last = history.last().unwrap().iter;
    if snapshots.last().map(|s| s.iter) != Some(last) {
        snapshots.push(Snapshot {
            iter: last,
            contours: zero_contours(mesh, &phi),
        });
    }
    Ok(RecoveryResult {
        phi,
        a1,
        a2,
        history,
        snapshots,
        stop,
    })
}
