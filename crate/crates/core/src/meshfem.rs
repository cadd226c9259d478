//! P1 finite elements on a uniform triangulation of the unit square.
//!
//! Nodes are numbered row by row, `i + j * (n + 1)`. Each grid square is
//! split along its lower-left to upper-right diagonal. Boundary nodes are
//! listed counter-clockwise starting at the origin.

use std::io::Write;

use crate::error::{check_len, Error, Result};

/// Uniform triangulation of `[0, 1]^2`.
#[derive(Debug, Clone)]
pub struct Mesh {
    n: usize,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_nodes: Vec<usize>,
    boundary_edges: Vec<[usize; 2]>,
    boundary_index: Vec<Option<usize>>,
    areas: Vec<f64>,
    grads: Vec<[[f64; 2]; 3]>,
}

impl Mesh {
    /// Builds the mesh with `n` subdivisions per side (`h = 1/n`).
    pub fn unit_square(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidInput("mesh needs n >= 1".into()));
        }
        let h = 1.0 / n as f64;
        let np = n + 1;
        let id = |i: usize, j: usize| i + j * np;
        let mut nodes = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                nodes.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (p00, p10, p11, p01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                triangles.push([p00, p10, p11]);
                triangles.push([p00, p11, p01]);
            }
        }
        let mut boundary_nodes = Vec::with_capacity(4 * n);
        for i in 0..n {
            boundary_nodes.push(id(i, 0));
        }
        for j in 0..n {
            boundary_nodes.push(id(n, j));
        }
        for i in (1..=n).rev() {
            boundary_nodes.push(id(i, n));
        }
        for j in (1..=n).rev() {
            boundary_nodes.push(id(0, j));
        }
        let nb = boundary_nodes.len();
        let boundary_edges = (0..nb)
            .map(|k| [boundary_nodes[k], boundary_nodes[(k + 1) % nb]])
            .collect();
        let mut boundary_index = vec![None; nodes.len()];
        for (k, &v) in boundary_nodes.iter().enumerate() {
            boundary_index[v] = Some(k);
        }
        let mut areas = Vec::with_capacity(triangles.len());
        let mut grads = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let [a, b, c] = [nodes[t[0]], nodes[t[1]], nodes[t[2]]];
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            areas.push(0.5 * det);
            let inv = 1.0 / det;
            grads.push([
                [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
                [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
                [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
            ]);
        }
        Ok(Mesh {
            n,
            nodes,
            triangles,
            boundary_nodes,
            boundary_edges,
            boundary_index,
            areas,
            grads,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Boundary nodes, counter-clockwise from the origin.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    /// Position of a node in [`Mesh::boundary_nodes`], if it lies on the boundary.
    pub fn boundary_position(&self, node: usize) -> Option<usize> {
        self.boundary_index[node]
    }

    pub fn area(&self, e: usize) -> f64 {
        self.areas[e]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Gradients of the three barycentric basis functions on element `e`.
    pub fn basis_gradients(&self, e: usize) -> &[[f64; 2]; 3] {
        &self.grads[e]
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let t = self.triangles[e];
        let mut c = [0.0; 2];
        for &v in &t {
            c[0] += self.nodes[v][0] / 3.0;
            c[1] += self.nodes[v][1] / 3.0;
        }
        c
    }

    /// Gradient of a P1 field on element `e`.
    pub fn element_gradient(&self, e: usize, u: &[f64]) -> [f64; 2] {
        let t = self.triangles[e];
        let g = &self.grads[e];
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += u[t[k]] * g[k][0];
            out[1] += u[t[k]] * g[k][1];
        }
        out
    }

    /// Lumped (row-sum) mass per node: one third of the adjacent element areas.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_nodes()];
        for (e, t) in self.triangles.iter().enumerate() {
            for &v in t {
                m[v] += self.areas[e] / 3.0;
            }
        }
        m
    }

    /// Boundary weight per boundary node: half the length of each adjacent edge.
    pub fn boundary_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.boundary_nodes.len()];
        let nb = w.len();
        for k in 0..nb {
            let len = self.edge_length(self.boundary_edges[k]);
            w[k] += 0.5 * len;
            w[(k + 1) % nb] += 0.5 * len;
        }
        w
    }

    fn edge_length(&self, e: [usize; 2]) -> f64 {
        let (a, b) = (self.nodes[e[0]], self.nodes[e[1]]);
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    /// Evaluates `f` at every node.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|p| f(p[0], p[1])).collect()
    }

    /// Evaluates `f` at every boundary node.
    pub fn interpolate_boundary(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.boundary_nodes
            .iter()
            .map(|&v| f(self.nodes[v][0], self.nodes[v][1]))
            .collect()
    }

    /// Restriction of a nodal field to the boundary nodes.
    pub fn restrict_to_boundary(&self, u: &[f64]) -> Vec<f64> {
        self.boundary_nodes.iter().map(|&v| u[v]).collect()
    }

    /// Nodes sharing an element with `v`, excluding `v`.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for t in &self.triangles {
            for a in 0..3 {
                for b in 0..3 {
                    if a != b && !adj[t[a]].contains(&t[b]) {
                        adj[t[a]].push(t[b]);
                    }
                }
            }
        }
        adj
    }

    /// Writes the mesh as plain text: a header, node lines and triangle lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# unit square mesh n={}", self.n)?;
        writeln!(w, "nodes {}", self.num_nodes())?;
        for p in &self.nodes {
            writeln!(w, "{:.17e} {:.17e}", p[0], p[1])?;
        }
        writeln!(w, "triangles {}", self.num_triangles())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "boundary {}", self.boundary_nodes.len())?;
        for v in &self.boundary_nodes {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

/// Diffusion coefficient, one positive value per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementField {
    values: Vec<f64>,
}

impl ElementField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "diffusion coefficient must be positive and finite, found {v}"
            )));
        }
        Ok(ElementField { values })
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Result<Self> {
        Self::new(vec![value; mesh.num_triangles()])
    }

    /// Evaluates `a` at each element centroid.
    pub fn from_fn(mesh: &Mesh, a: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::new(
            (0..mesh.num_triangles())
                .map(|e| {
                    let c = mesh.centroid(e);
                    a(c[0], c[1])
                })
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Compressed sparse row matrix with full (not triangular) storage.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Zero matrix with the sparsity pattern of the P1 mesh graph.
    pub fn mesh_pattern(mesh: &Mesh) -> Self {
        let adj = mesh.neighbours();
        let n = mesh.num_nodes();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for (v, nb) in adj.iter().enumerate() {
            let mut row: Vec<usize> = nb.clone();
            row.push(v);
            row.sort_unstable();
            cols.extend_from_slice(&row);
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        SparseMatrix {
            n,
            row_ptr,
            cols,
            vals: vec![0.0; nnz],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[s..e].binary_search(&j).ok().map(|k| s + k)
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.vals[k])
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j).expect("entry outside sparsity pattern");
        self.vals[k] += v;
    }

    /// Iterates over the stored entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[s..e].iter().copied().zip(self.vals[s..e].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    /// `self * alpha + other * beta`; both must share the pattern.
    pub fn linear_combination(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> SparseMatrix {
        assert_eq!(self.cols, other.cols, "patterns differ");
        let mut out = self.clone();
        for (o, v) in out.vals.iter_mut().zip(&other.vals) {
            *o = *o * alpha + beta * v;
        }
        out
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut t = self.clone();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let slot = t.slot(j, i).expect("pattern is not symmetric");
                t.vals[slot] = self.vals[k];
            }
        }
        t
    }

    /// Largest `|i - j|` over stored entries.
    pub fn half_bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// Dense copy, for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

/// Banded Cholesky factor `A = L L^T` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    p: usize,
    // Row i holds L[i][i-p..=i] in band[i*(p+1)..(i+1)*(p+1)].
    band: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        Self::factor_with_pin(a, None)
    }

    /// Factors `a` with row and column `pin` replaced by the identity.
    pub fn factor_with_pin(a: &SparseMatrix, pin: Option<usize>) -> Result<Self> {
        let n = a.dim();
        let p = a.half_bandwidth();
        let w = p + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i && i - j <= p {
                    let pinned = pin.is_some_and(|q| q == i || q == j);
                    band[i * w + (j + p - i)] = if pinned { 0.0 } else { v };
                }
            }
            if pin == Some(i) {
                band[i * w + p] = 1.0;
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(p);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(p));
                let mut s = band[i * w + (j + p - i)];
                for k in klo..j {
                    s -= band[i * w + (k + p - i)] * band[j * w + (k + p - j)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    band[i * w + p] = s.sqrt();
                } else {
                    band[i * w + (j + p - i)] = s / band[j * w + p];
                }
            }
        }
        Ok(BandCholesky { n, p, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, p, w) = (self.n, self.p, self.p + 1);
        for i in 0..n {
            let lo = i.saturating_sub(p);
            let mut s = x[i];
            for k in lo..i {
                s -= self.band[i * w + (k + p - i)] * x[k];
            }
            x[i] = s / self.band[i * w + p];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n.min(i + p + 1) {
                s -= self.band[k * w + (i + p - k)] * x[k];
            }
            x[i] = s / self.band[i * w + p];
        }
    }
}

/// Consistent P1 mass matrix.
pub fn assemble_mass(mesh: &Mesh) -> SparseMatrix {
    let mut m = SparseMatrix::mesh_pattern(mesh);
    for (e, t) in mesh.triangles().iter().enumerate() {
        let c = mesh.area(e) / 12.0;
        for a in 0..3 {
            for b in 0..3 {
                m.add(t[a], t[b], if a == b { 2.0 * c } else { c });
            }
        }
    }
    m
}

/// Local stiffness contribution `area * grad(phi_i) . grad(phi_j)` without the coefficient.
pub fn element_stiffness(mesh: &Mesh, e: usize) -> [[f64; 3]; 3] {
    let g = mesh.basis_gradients(e);
    let area = mesh.area(e);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

/// Stiffness matrix for `-div(a grad u)` with element-wise constant `a`.
pub fn assemble_stiffness(mesh: &Mesh, a: &ElementField) -> Result<SparseMatrix> {
    check_len(mesh.num_triangles(), a.len())?;
    let mut k = SparseMatrix::mesh_pattern(mesh);
    for (e, t) in mesh.triangles().iter().enumerate() {
        let ke = element_stiffness(mesh, e);
        let ae = a.values()[e];
        for p in 0..3 {
            for q in 0..3 {
                k.add(t[p], t[q], ae * ke[p][q]);
            }
        }
    }
    Ok(k)
}

/// Quadrature used for boundary integrals of nodal data against basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeQuadrature {
    /// Nodal trapezoidal rule (diagonal boundary mass).
    #[default]
    Trapezoid,
    /// Exact integration of the piecewise linear interpolant.
    Exact,
}

/// Neumann load `b_i = int_{boundary} eta phi_i` from boundary nodal values of `eta`.
pub fn assemble_neumann_load(mesh: &Mesh, eta: &[f64], quad: EdgeQuadrature) -> Result<Vec<f64>> {
    let nb = mesh.boundary_nodes().len();
    check_len(nb, eta.len())?;
    let mut b = vec![0.0; mesh.num_nodes()];
    for (k, edge) in mesh.boundary_edges().iter().enumerate() {
        let len = mesh.edge_length(*edge);
        let (ea, eb) = (eta[k], eta[(k + 1) % nb]);
        match quad {
            EdgeQuadrature::Trapezoid => {
                b[edge[0]] += 0.5 * len * ea;
                b[edge[1]] += 0.5 * len * eb;
            }
            EdgeQuadrature::Exact => {
                b[edge[0]] += len * (2.0 * ea + eb) / 6.0;
                b[edge[1]] += len * (ea + 2.0 * eb) / 6.0;
            }
        }
    }
    Ok(b)
}

/// Solution of the pure Neumann elliptic problem with zero mean.
#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub u: Vec<f64>,
    /// Lagrange multiplier of the zero-mean constraint.
    pub multiplier: f64,
}

/// Solves `-div(a grad w) = f` with `a dw/dn = eta` and `int w = 0`.
///
/// The constraint enters through one Lagrange multiplier. At the discrete
/// level the multiplier equals the compatibility defect `sum(b) / |Omega|`,
/// and data whose defect exceeds round-off are rejected.
pub fn solve_neumann_elliptic(
    mesh: &Mesh,
    a: &ElementField,
    f: &[f64],
    eta: &[f64],
) -> Result<EllipticSolution> {
    check_len(mesh.num_nodes(), f.len())?;
    let mass = assemble_mass(mesh);
    let k = assemble_stiffness(mesh, a)?;
    let mut b = mass.mul_vec(f);
    let load = assemble_neumann_load(mesh, eta, EdgeQuadrature::Trapezoid)?;
    for (bi, li) in b.iter_mut().zip(&load) {
        *bi += li;
    }
    let m1 = mass.mul_vec(&vec![1.0; mesh.num_nodes()]);
    let total: f64 = m1.iter().sum();
    let defect: f64 = b.iter().sum();
    let scale: f64 = b.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    if defect.abs() > 1e-10 * scale {
        return Err(Error::IncompatibleData { defect });
    }
    let multiplier = defect / total;
    for (bi, mi) in b.iter_mut().zip(&m1) {
        *bi -= multiplier * mi;
    }
    // K has the constants as kernel; pinning one node picks a representative
    // that the mean shift below turns into the constrained solution.
    let pin = 0;
    b[pin] = 0.0;
    let chol = BandCholesky::factor_with_pin(&k, Some(pin))?;
    let mut u = chol.solve(&b);
    let mean: f64 = u.iter().zip(&m1).map(|(x, m)| x * m).sum::<f64>() / total;
    for x in u.iter_mut() {
        *x -= mean;
    }
    Ok(EllipticSolution { u, multiplier })
}
