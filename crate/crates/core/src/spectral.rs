//! Mittag-Leffler function and the modal reference solution for constant
//! diffusivity on the unit square with Neumann conditions.

use std::f64::consts::PI;

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::meshfem::Mesh;
use crate::quadrature;
use crate::timefrac::TimeProfile;

/// Below this `|x|` the power series is summed directly.
pub const X_SERIES: f64 = 1.0;
/// Above `asymptotic_threshold(alpha)` the asymptotic expansion is used.
pub const X_ASYMPTOTIC: f64 = 50.0;

/// Switch point to the asymptotic expansion. Its remainder is of order
/// `exp(-|x|^(1/alpha))`, so orders above one need larger arguments.
pub fn asymptotic_threshold(alpha: f64) -> f64 {
    X_ASYMPTOTIC.max(40f64.powf(alpha))
}

/// `1 / Gamma(x)`, zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.round() {
        0.0
    } else if x >= 0.5 {
        if x > 170.0 {
            (-ln_gamma(x)).exp()
        } else {
            1.0 / gamma(x)
        }
    } else {
        (PI * x).sin() * gamma_positive(1.0 - x) / PI
    }
}

fn gamma_positive(x: f64) -> f64 {
    if x > 170.0 {
        ln_gamma(x).exp()
    } else {
        gamma(x)
    }
}

/// `1/Gamma(x) = sign * sin_factor * exp(envelope)`: the smooth envelope
/// `ln Gamma(1 - x) - ln pi` (or `-ln Gamma(x)`) is kept separate from the
/// oscillating factor so that term sizes can be compared reliably.
fn split_rgamma(x: f64) -> (f64, f64) {
    if x >= 0.5 {
        (-ln_gamma(x), 1.0)
    } else if x == x.round() {
        (ln_gamma(1.0 - x) - PI.ln(), 0.0)
    } else {
        (ln_gamma(1.0 - x) - PI.ln(), (PI * x).sin())
    }
}

/// Evaluation route for [`MittagLeffler::eval_by`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Power series.
    Series,
    /// Contour integral collapsed onto the branch cut (closed-form
    /// hypergeometric sum when `alpha = 1`).
    Integral,
    /// Algebraic asymptotic expansion plus pole contributions.
    Asymptotic,
}

/// Two-parameter Mittag-Leffler function `E_{alpha,beta}` on the negative
/// real axis, with coefficients precomputed for repeated evaluation.
#[derive(Debug, Clone)]
pub struct MittagLeffler {
    alpha: f64,
    beta: f64,
    series: Vec<f64>,
    asym: Vec<(f64, f64)>,
    lower: Option<Box<MittagLeffler>>,
}

impl MittagLeffler {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) || !beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "Mittag-Leffler parameters out of range: alpha={alpha}, beta={beta}"
            )));
        }
        let mut series = Vec::new();
        let mut k = 0usize;
        loop {
            let c = rgamma(alpha * k as f64 + beta);
            series.push(c);
            k += 1;
            // Terms are bounded by X_SERIES^k |c_k| <= |c_k|.
            if (k as f64 * alpha > 2.0 && c.abs() < 1e-18) || k > 5000 {
                break;
            }
        }
        let asym = (1..400)
            .map(|k| split_rgamma(beta - alpha * k as f64))
            .collect();
        // Integral representation needs beta < 1 + alpha; shift down otherwise.
        let lower = if beta >= 1.0 + alpha && alpha != 1.0 {
            Some(Box::new(MittagLeffler::new(alpha, beta - alpha)?))
        } else {
            None
        };
        Ok(MittagLeffler {
            alpha,
            beta,
            series,
            asym,
            lower,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `E_{alpha,beta}(x)` for `x <= 0`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "Mittag-Leffler argument must be non-positive, got {x}"
            )));
        }
        Ok(self.eval_neg(-x))
    }

    /// Evaluates `E_{alpha,beta}(-s)` by a fixed method, bypassing the
    /// automatic region selection. Each method is only accurate in part of
    /// the range; this is meant for cross-checks.
    pub fn eval_by(&self, s: f64, method: Method) -> f64 {
        match method {
            Method::Series => self.series_sum(s),
            Method::Asymptotic => self.asymptotic(s) + self.pole_terms(s),
            Method::Integral => {
                if self.alpha == 1.0 {
                    self.kummer(s)
                } else if let Some(lower) = &self.lower {
                    (rgamma(self.beta - self.alpha) - lower.eval_by(s, Method::Integral)) / s
                } else {
                    self.integral(s) + self.pole_terms(s)
                }
            }
        }
    }

    /// `E_{alpha,beta}(-s)` for `s >= 0`.
    pub fn eval_neg(&self, s: f64) -> f64 {
        if s <= X_SERIES {
            return self.series_sum(s);
        }
        if self.alpha == 1.0 {
            return if s <= 700.0 {
                self.kummer(s)
            } else {
                self.asymptotic(s)
            };
        }
        if s >= asymptotic_threshold(self.alpha) {
            return self.asymptotic(s) + self.pole_terms(s);
        }
        if let Some(lower) = &self.lower {
            let shift = self.beta - self.alpha;
            return (rgamma(shift) - lower.eval_neg(s)) / s;
        }
        self.integral(s) + self.pole_terms(s)
    }

    fn series_sum(&self, s: f64) -> f64 {
        let mut sum = 0.0;
        let mut p = 1.0;
        for &c in &self.series {
            sum += p * c;
            p *= -s;
        }
        sum
    }

    fn asymptotic(&self, s: f64) -> f64 {
        let ls = s.ln();
        let mut sum = 0.0;
        let mut prev = f64::INFINITY;
        for (i, &(env, factor)) in self.asym.iter().enumerate() {
            let k = (i + 1) as f64;
            let bound = (env - k * ls).exp();
            // Optimal truncation: stop once the envelope starts to grow.
            if bound > prev {
                break;
            }
            prev = bound;
            // -(-s)^(-k) / Gamma(beta - alpha k)
            let sign = if (i + 1) % 2 == 0 { -1.0 } else { 1.0 };
            sum += sign * factor * bound;
            if bound < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    }

    /// Contribution of the poles `s^alpha = -x` on the principal sheet (alpha > 1).
    fn pole_terms(&self, s: f64) -> f64 {
        if self.alpha <= 1.0 {
            return 0.0;
        }
        let rho = s.powf(1.0 / self.alpha);
        let theta = PI / self.alpha;
        let arg = (1.0 - self.beta) * theta + rho * theta.sin();
        2.0 / self.alpha * rho.powf(1.0 - self.beta) * (rho * theta.cos()).exp() * arg.cos()
    }

    fn integral(&self, s: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        let sb = (PI * b).sin();
        let sba = (PI * (b - a)).sin();
        let ca = (PI * a).cos();
        let p = (1.0 - b) / a;
        let inv_a = 1.0 / a;
        let integrand = |u: f64| {
            if u == 0.0 {
                return 0.0;
            }
            let den = u * u + 2.0 * s * u * ca + s * s;
            (-u.powf(inv_a)).exp() * u.powf(p) * (u * sb + s * sba) / den
        };
        let upper = 60f64.powf(a);
        let mut breaks = vec![1.0, s];
        if ca < 0.0 {
            breaks.push(-s * ca);
        }
        let r = quadrature::integrate(integrand, 0.0, upper, &breaks, 1e-300, 1e-14, 2000);
        r.value / (a * PI)
    }

    fn kummer(&self, s: f64) -> f64 {
        let b = self.beta;
        if b <= 0.0 {
            let up = MittagLeffler::new(1.0, b + 1.0).expect("valid parameters");
            return rgamma(b) - s * up.eval_neg(s);
        }
        if b == 1.0 {
            return (-s).exp();
        }
        // E_{1,b}(-s) = exp(-s)/Gamma(b) * sum_k (b-1)/(b-1+k) s^k/k!
        let mut sum = 1.0;
        let mut p = 1.0;
        let mut k = 1.0;
        loop {
            p *= s / k;
            let term = (b - 1.0) / (b - 1.0 + k) * p;
            sum += term;
            if k > s && term.abs() < 1e-17 * sum.abs() {
                break;
            }
            k += 1.0;
        }
        // Combine exp(-s) and the growing sum in log space to avoid overflow.
        let lg = if b > 170.0 { -ln_gamma(b) } else { rgamma(b).abs().ln() };
        sum.signum() * rgamma(b).signum() * (sum.abs().ln() - s + lg).exp()
    }
}

/// One-off evaluation of `E_{alpha,beta}(x)` for `x <= 0`.
pub fn mittag_leffler(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    MittagLeffler::new(alpha, beta)?.eval(x)
}

/// Neumann eigenfunction `c_k c_l cos(k pi x) cos(l pi y)` of `-Laplace`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub k: usize,
    pub l: usize,
    /// Eigenvalue `(k^2 + l^2) pi^2` for unit diffusivity.
    pub lambda: f64,
}

fn cos_norm(k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        std::f64::consts::SQRT_2
    }
}

impl EigenPair {
    pub fn new(k: usize, l: usize) -> Self {
        EigenPair {
            k,
            l,
            lambda: ((k * k + l * l) as f64) * PI * PI,
        }
    }

    /// L2-normalisation constant.
    pub fn norm_const(&self) -> f64 {
        cos_norm(self.k) * cos_norm(self.l)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.norm_const() * (self.k as f64 * PI * x).cos() * (self.l as f64 * PI * y).cos()
    }
}

/// All eigenpairs with `k, l <= k_max`, sorted by eigenvalue.
pub fn laplace_neumann_eigenpairs(k_max: usize) -> Vec<EigenPair> {
    let mut v: Vec<EigenPair> = (0..=k_max)
        .flat_map(|k| (0..=k_max).map(move |l| EigenPair::new(k, l)))
        .collect();
    v.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap().then(a.k.cmp(&b.k)));
    v
}

/// Function of one variable on `[0, 1]` with closed-form cosine moments.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile1D {
    /// Polynomial with coefficients in increasing degree.
    Poly(Vec<f64>),
    /// `cos(m pi s)`.
    Cos(usize),
}

impl Profile1D {
    pub fn constant(c: f64) -> Self {
        Profile1D::Poly(vec![c])
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Profile1D::Poly(c) => c.iter().rev().fold(0.0, |acc, &a| acc * s + a),
            Profile1D::Cos(m) => (*m as f64 * PI * s).cos(),
        }
    }

    /// `int_0^1 p(s) cos(k pi s) ds`.
    pub fn cos_moment(&self, k: usize) -> f64 {
        match self {
            Profile1D::Cos(m) => {
                if *m != k {
                    0.0
                } else if k == 0 {
                    1.0
                } else {
                    0.5
                }
            }
            Profile1D::Poly(c) => {
                let im = poly_cos_moments(c.len().saturating_sub(1), k);
                c.iter().zip(&im).map(|(a, b)| a * b).sum()
            }
        }
    }

    /// `int_0^1 p(s) q(s) ds`.
    pub fn inner(&self, other: &Profile1D) -> f64 {
        match (self, other) {
            (Profile1D::Cos(m), q) | (q, Profile1D::Cos(m)) => q.cos_moment(*m),
            (Profile1D::Poly(a), Profile1D::Poly(b)) => {
                let mut s = 0.0;
                for (i, x) in a.iter().enumerate() {
                    for (j, y) in b.iter().enumerate() {
                        s += x * y / (i + j + 1) as f64;
                    }
                }
                s
            }
        }
    }
}

/// `I_m = int_0^1 s^m cos(k pi s) ds` for `m = 0..=deg`.
fn poly_cos_moments(deg: usize, k: usize) -> Vec<f64> {
    if k == 0 {
        return (0..=deg).map(|m| 1.0 / (m + 1) as f64).collect();
    }
    let w = k as f64 * PI;
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let mut ic = vec![0.0; deg + 1];
    let mut is = vec![0.0; deg + 1];
    for m in 0..=deg {
        let mf = m as f64;
        // S_m = int s^m sin(w s) = -(cos w)/w + [m == 0]/w + (m/w) I_{m-1}
        is[m] = -sign / w + if m == 0 { 1.0 / w } else { mf / w * ic[m - 1] };
        // I_m = int s^m cos(w s) = -(m/w) S_{m-1}
        ic[m] = if m == 0 { 0.0 } else { -mf / w * is[m - 1] };
    }
    ic
}

/// Sum of products `c * X(x) * Y(y)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeparableField {
    pub terms: Vec<(f64, Profile1D, Profile1D)>,
}

impl SeparableField {
    pub fn zero() -> Self {
        SeparableField { terms: Vec::new() }
    }

    pub fn term(c: f64, x: Profile1D, y: Profile1D) -> Self {
        SeparableField {
            terms: vec![(c, x, y)],
        }
    }

    pub fn plus(mut self, other: SeparableField) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms.iter().map(|(c, p, q)| c * p.eval(x) * q.eval(y)).sum()
    }

    /// Coefficient against the normalised eigenfunction of `mode`.
    pub fn coefficient(&self, mode: &EigenPair) -> f64 {
        mode.norm_const()
            * self
                .terms
                .iter()
                .map(|(c, p, q)| c * p.cos_moment(mode.k) * q.cos_moment(mode.l))
                .sum::<f64>()
    }

    pub fn norm_sq(&self) -> f64 {
        let mut s = 0.0;
        for (c1, p1, q1) in &self.terms {
            for (c2, p2, q2) in &self.terms {
                s += c1 * c2 * p1.inner(p2) * q1.inner(q2);
            }
        }
        s
    }
}

/// Boundary function given edge by edge; horizontal edges are parametrised
/// by `x`, vertical edges by `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProfiles {
    pub bottom: Profile1D,
    pub right: Profile1D,
    pub top: Profile1D,
    pub left: Profile1D,
}

impl EdgeProfiles {
    pub fn uniform(p: Profile1D) -> Self {
        EdgeProfiles {
            bottom: p.clone(),
            right: p.clone(),
            top: p.clone(),
            left: p,
        }
    }

    /// Value at a boundary point. Corners take the horizontal edge value.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let tol = 1e-12;
        if y <= tol {
            self.bottom.eval(x)
        } else if y >= 1.0 - tol {
            self.top.eval(x)
        } else if x <= tol {
            self.left.eval(y)
        } else {
            self.right.eval(y)
        }
    }

    /// `int_{boundary} eta phi_mode`.
    pub fn coefficient(&self, mode: &EigenPair) -> f64 {
        let (ck, cl) = (cos_norm(mode.k), cos_norm(mode.l));
        let sk = if mode.k % 2 == 0 { 1.0 } else { -1.0 };
        let sl = if mode.l % 2 == 0 { 1.0 } else { -1.0 };
        let horizontal = ck * cl * (self.bottom.cos_moment(mode.k) + sl * self.top.cos_moment(mode.k));
        let vertical = ck * cl * (self.left.cos_moment(mode.l) + sk * self.right.cos_moment(mode.l));
        horizontal + vertical
    }
}

/// Boundary excitation `eta(x) psi(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalExcitation {
    pub eta: EdgeProfiles,
    pub profile: TimeProfile,
}

/// Truncated modal expansion of the data for constant diffusivity.
#[derive(Debug, Clone)]
pub struct ModalData {
    pub diffusivity: f64,
    pub modes: Vec<EigenPair>,
    pub u0: Vec<f64>,
    pub f: Vec<f64>,
    /// One coefficient vector per excitation component.
    pub eta: Vec<Vec<f64>>,
    pub profiles: Vec<TimeProfile>,
    /// L2(Omega) bound on the interior part of the discarded modes.
    pub tail_bound: f64,
}

impl ModalData {
    /// Projects separable data onto modes with `k, l <= k_max`, plus the
    /// axis modes `(k, 0)` and `(0, l)` up to `axis_k_max`.
    pub fn separable(
        diffusivity: f64,
        k_max: usize,
        axis_k_max: usize,
        u0: &SeparableField,
        f: &SeparableField,
        excitations: &[ModalExcitation],
    ) -> Result<Self> {
        if !(diffusivity > 0.0) {
            return Err(Error::InvalidInput("diffusivity must be positive".into()));
        }
        let mut modes: Vec<EigenPair> = (0..=k_max)
            .flat_map(|k| (0..=k_max).map(move |l| EigenPair::new(k, l)))
            .collect();
        // Cosine edge profiles excite a whole line of modes whose
        // coefficients do not decay, so those lines are extended as well.
        let mut lines_x = vec![0usize];
        let mut lines_y = vec![0usize];
        for ex in excitations {
            for p in [&ex.eta.bottom, &ex.eta.top] {
                if let Profile1D::Cos(m) = p {
                    lines_x.push(*m);
                }
            }
            for p in [&ex.eta.left, &ex.eta.right] {
                if let Profile1D::Cos(m) = p {
                    lines_y.push(*m);
                }
            }
        }
        let mut seen: std::collections::HashSet<(usize, usize)> =
            modes.iter().map(|m| (m.k, m.l)).collect();
        for j in k_max + 1..=axis_k_max {
            for &m in &lines_x {
                if seen.insert((m, j)) {
                    modes.push(EigenPair::new(m, j));
                }
            }
            for &m in &lines_y {
                if seen.insert((j, m)) {
                    modes.push(EigenPair::new(j, m));
                }
            }
        }
        let u0c: Vec<f64> = modes.iter().map(|m| u0.coefficient(m)).collect();
        let fc: Vec<f64> = modes.iter().map(|m| f.coefficient(m)).collect();
        let eta = excitations
            .iter()
            .map(|ex| modes.iter().map(|m| ex.eta.coefficient(m)).collect())
            .collect();
        let missing = |norm_sq: f64, c: &[f64]| {
            (norm_sq - c.iter().map(|v| v * v).sum::<f64>()).max(0.0).sqrt()
        };
        let lambda_cut = diffusivity * PI * PI * ((k_max + 1) * (k_max + 1)) as f64;
        let tail_bound = missing(u0.norm_sq(), &u0c) + missing(f.norm_sq(), &fc) / lambda_cut;
        Ok(ModalData {
            diffusivity,
            modes,
            u0: u0c,
            f: fc,
            eta,
            profiles: excitations.iter().map(|e| e.profile.clone()).collect(),
            tail_bound,
        })
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.diffusivity * self.modes[i].lambda
    }
}

/// Reference solution split into the part driven by initial data and
/// source and the part driven by the boundary flux.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub times: Vec<f64>,
    /// Modal coefficients of the interior part, `[time][mode]`.
    pub interior: Vec<Vec<f64>>,
    /// Modal coefficients of the boundary-driven part, `[time][mode]`.
    pub boundary: Vec<Vec<f64>>,
}

/// `G(t) = int_0^t s^(alpha-1) E_{alpha,alpha}(-lambda s^alpha) psi(t-s) ds`.
fn duhamel(ml_b: &MittagLeffler, alpha: f64, lambda: f64, profile: &TimeProfile, t: f64) -> f64 {
    let g = |tau: f64| {
        if tau <= 0.0 {
            0.0
        } else {
            let ta = tau.powf(alpha);
            ta * ml_b.eval_neg(lambda * ta)
        }
    };
    match *profile {
        TimeProfile::Step { t_on } => g(t - t_on),
        TimeProfile::Ramp { t0, t1 } => {
            if t <= t0 {
                return 0.0;
            }
            let hi = t.min(t1);
            let d = |s: f64| profile.derivative(s) * g(t - s);
            quadrature::integrate(d, t0, hi, &[], 1e-15, 1e-12, 400).value
        }
    }
}

/// Modal coefficients of the reference solution at the given times.
pub fn oracle_solution(data: &ModalData, alpha: f64, times: &[f64]) -> Result<OracleSolution> {
    if !(alpha > 0.0 && alpha < 1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!("order must lie in (0, 1], got {alpha}")));
    }
    let ml1 = MittagLeffler::new(alpha, 1.0)?;
    let ml_b = MittagLeffler::new(alpha, alpha + 1.0)?;
    let nm = data.modes.len();
    let mut interior = Vec::with_capacity(times.len());
    let mut boundary = Vec::with_capacity(times.len());
    for &t in times {
        if t < 0.0 {
            return Err(Error::InvalidInput("negative time".into()));
        }
        let ta = t.powf(alpha);
        let mut ui = vec![0.0; nm];
        let mut ub = vec![0.0; nm];
        for i in 0..nm {
            let lam = data.lambda(i);
            let x = lam * ta;
            if data.u0[i] != 0.0 {
                ui[i] += data.u0[i] * ml1.eval_neg(x);
            }
            if data.f[i] != 0.0 {
                ui[i] += data.f[i] * ta * ml_b.eval_neg(x);
            }
            for (eta, prof) in data.eta.iter().zip(&data.profiles) {
                if eta[i] != 0.0 {
                    ub[i] += eta[i] * duhamel(&ml_b, alpha, lam, prof, t);
                }
            }
        }
        interior.push(ui);
        boundary.push(ub);
    }
    Ok(OracleSolution {
        times: times.to_vec(),
        interior,
        boundary,
    })
}

/// Reference boundary trace at the mesh boundary nodes.
#[derive(Debug, Clone)]
pub struct OracleTrace {
    pub times: Vec<f64>,
    /// `[time][boundary node]`
    pub interior: Vec<Vec<f64>>,
    pub boundary: Vec<Vec<f64>>,
}

impl OracleTrace {
    /// Full trace `h = h_i + h_b`.
    pub fn total(&self) -> Vec<Vec<f64>> {
        self.interior
            .iter()
            .zip(&self.boundary)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect()
    }
}

/// Evaluates modal coefficients at arbitrary points.
pub fn evaluate_modes(data: &ModalData, coeffs: &[f64], points: &[[f64; 2]]) -> Vec<f64> {
    let basis: Vec<Vec<f64>> = points
        .iter()
        .map(|p| data.modes.iter().map(|m| m.eval(p[0], p[1])).collect())
        .collect();
    basis
        .iter()
        .map(|b| b.iter().zip(coeffs).map(|(x, y)| x * y).sum())
        .collect()
}

/// Boundary trace of the reference solution at the mesh boundary nodes.
pub fn oracle_trace(data: &ModalData, alpha: f64, mesh: &Mesh, times: &[f64]) -> Result<OracleTrace> {
    let sol = oracle_solution(data, alpha, times)?;
    let pts: Vec<[f64; 2]> = mesh
        .boundary_nodes()
        .iter()
        .map(|&v| mesh.nodes()[v])
        .collect();
    oracle_trace_at(data, &sol, &pts)
}

/// Evaluates an oracle solution at the given points.
pub fn oracle_trace_at(data: &ModalData, sol: &OracleSolution, points: &[[f64; 2]]) -> Result<OracleTrace> {
    let basis: Vec<Vec<f64>> = points
        .iter()
        .map(|p| data.modes.iter().map(|m| m.eval(p[0], p[1])).collect())
        .collect();
    let apply = |c: &Vec<f64>| -> Vec<f64> {
        basis
            .iter()
            .map(|b| b.iter().zip(c).map(|(x, y)| x * y).sum())
            .collect()
    };
    Ok(OracleTrace {
        times: sol.times.clone(),
        interior: sol.interior.iter().map(apply).collect(),
        boundary: sol.boundary.iter().map(apply).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgamma_values() {
        assert!((rgamma(1.0) - 1.0).abs() < 1e-15);
        assert!((rgamma(0.5) - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert_eq!(rgamma(0.0), 0.0);
        assert_eq!(rgamma(-3.0), 0.0);
        // Gamma(-0.5) = -2 sqrt(pi)
        assert!((rgamma(-0.5) + 1.0 / (2.0 * PI.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn positive_argument_rejected() {
        assert!(mittag_leffler(0.5, 1.0, 0.1).is_err());
        assert!(MittagLeffler::new(0.0, 1.0).is_err());
        assert!(MittagLeffler::new(2.0, 1.0).is_err());
    }

    #[test]
    fn value_at_zero() {
        for &(a, b) in &[(0.3, 1.0), (0.8, 0.8), (0.5, 1.5)] {
            let v = mittag_leffler(a, b, 0.0).unwrap();
            assert!((v - rgamma(b)).abs() < 1e-15);
        }
    }

    #[test]
    fn poly_cos_moment_matches_quadrature() {
        let p = Profile1D::Poly(vec![0.0, 0.0, 1.0, -2.0, 1.0]);
        for k in [0, 1, 2, 7, 30] {
            let q = quadrature::integrate(
                |s| p.eval(s) * (k as f64 * PI * s).cos(),
                0.0,
                1.0,
                &[],
                1e-16,
                1e-14,
                400,
            );
            assert!((p.cos_moment(k) - q.value).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn eigenpairs_sorted_and_counted() {
        let v = laplace_neumann_eigenpairs(3);
        assert_eq!(v.len(), 16);
        assert_eq!((v[0].k, v[0].l), (0, 0));
        assert!(v.windows(2).all(|w| w[0].lambda <= w[1].lambda));
    }
}
