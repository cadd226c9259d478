//! Rational (AAA) continuation of the early-time trace, used to remove the
//! contribution of the initial data and source from the late-time data.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::timefrac::BoundaryTrace;

/// Rational function in barycentric form
/// `r(t) = sum_j w_j f_j / (t - z_j) / sum_j w_j / (t - z_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rational {
    pub support: Vec<f64>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rational {
    /// Type `(m-1, m-1)` for `m` support points.
    pub fn degree(&self) -> usize {
        self.support.len().saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        evaluate_rational(self, t)
    }

    /// Finite poles, from the arrowhead pencil of the barycentric form.
    pub fn poles(&self) -> Vec<Complex<f64>> {
        let m = self.support.len();
        if m < 2 {
            return Vec::new();
        }
        let d = m + 1;
        let mut a = DMatrix::<f64>::zeros(d, d);
        let mut b = DMatrix::<f64>::zeros(d, d);
        for j in 0..m {
            a[(0, j + 1)] = self.weights[j];
            a[(j + 1, 0)] = 1.0;
            a[(j + 1, j + 1)] = self.support[j];
            b[(j + 1, j + 1)] = 1.0;
        }
        let (zmin, zmax) = self.support_range();
        let mut sigma = zmax + 1.37 * (zmax - zmin + 1.0);
        for _ in 0..8 {
            let shifted = &a - &b * sigma;
            if let Some(inv) = shifted.try_inverse() {
                let mu = (inv * &b).complex_eigenvalues();
                let scale = mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
                return mu
                    .iter()
                    .filter(|z| z.norm() > 1e-13 * scale.max(1e-300))
                    .map(|z| Complex::new(sigma, 0.0) + Complex::new(1.0, 0.0) / z)
                    .collect();
            }
            sigma += 0.913 * (zmax - zmin + 1.0);
        }
        Vec::new()
    }

    /// Residue at a (simple) pole.
    pub fn residue(&self, p: Complex<f64>) -> Complex<f64> {
        let mut num = Complex::new(0.0, 0.0);
        let mut dden = Complex::new(0.0, 0.0);
        for ((z, f), w) in self.support.iter().zip(&self.values).zip(&self.weights) {
            let c = Complex::new(1.0, 0.0) / (p - z);
            num += c * (w * f);
            dden -= c * c * *w;
        }
        num / dden
    }

    fn support_range(&self) -> (f64, f64) {
        let lo = self.support.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.support.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Barycentric evaluation; exact at support points.
pub fn evaluate_rational(r: &Rational, t: f64) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((z, f), w) in r.support.iter().zip(&r.values).zip(&r.weights) {
        if t == *z {
            return Ok(*f);
        }
        let c = w / (t - z);
        num += c * f;
        den += c;
    }
    if den.abs() < 1e-300 {
        return Err(Error::Pole { t });
    }
    Ok(num / den)
}

/// Settings for [`aaa_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AaaOptions {
    /// Maximal type `(r, r)`; at most `r + 1` support points.
    pub max_degree: usize,
    /// Stop when the sample residual drops below `tol * max|f|`.
    pub tol: f64,
    /// Remove pole/zero doublets with negligible residue.
    pub cleanup: bool,
}

impl Default for AaaOptions {
    fn default() -> Self {
        AaaOptions {
            max_degree: 4,
            tol: 1e-13,
            cleanup: true,
        }
    }
}

/// Outcome of an AAA fit.
#[derive(Debug, Clone)]
pub struct AaaFit {
    pub rational: Rational,
    /// Maximal residual on the samples.
    pub residual: f64,
    /// Maximal residual after each greedy step. Not monotone in general;
    /// the returned approximant is the best iterate.
    pub history: Vec<f64>,
    /// Number of support points removed by the cleanup.
    pub removed: usize,
}

fn weights_for(z: &[f64], f: &[f64], support: &[usize]) -> Result<Vec<f64>> {
    let rest: Vec<usize> = (0..z.len()).filter(|i| !support.contains(i)).collect();
    let m = support.len();
    if rest.len() < m {
        return Err(Error::InsufficientSamples {
            needed: 2 * m,
            got: z.len(),
        });
    }
    let a = DMatrix::from_fn(rest.len(), m, |i, j| {
        let (ii, jj) = (rest[i], support[j]);
        (f[ii] - f[jj]) / (z[ii] - z[jj])
    });
    let svd = a.svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::DegenerateData("SVD failed for Loewner matrix".into()))?;
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .map(|p| p.0)
        .unwrap_or(0);
    Ok(vt.row(k).iter().copied().collect())
}

fn max_residual(z: &[f64], f: &[f64], r: &Rational) -> f64 {
    z.iter()
        .zip(f)
        .map(|(t, v)| match r.eval(*t) {
            Ok(x) => (x - v).abs(),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Greedy AAA fit of `f` on the sample points `z`.
pub fn aaa_fit(z: &[f64], f: &[f64], opts: &AaaOptions) -> Result<AaaFit> {
    if z.len() != f.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: f.len(),
        });
    }
    let needed = 2 * opts.max_degree + 2;
    if z.len() < needed {
        return Err(Error::InsufficientSamples { needed, got: z.len() });
    }
    let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = opts.tol * scale;
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    let mut approx: Vec<f64> = vec![mean; z.len()];
    let mut support: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut rational = Rational {
        support: vec![],
        values: vec![],
        weights: vec![],
    };
    let mut residual = f64::INFINITY;
    let mut best: Option<(Vec<usize>, Rational, f64)> = None;
    while support.len() <= opts.max_degree {
        let j = (0..z.len())
            .filter(|i| !support.contains(i))
            .max_by(|&a, &b| {
                (f[a] - approx[a])
                    .abs()
                    .partial_cmp(&(f[b] - approx[b]).abs())
                    .unwrap()
            })
            .unwrap();
        support.push(j);
        let w = weights_for(z, f, &support)?;
        rational = Rational {
            support: support.iter().map(|&i| z[i]).collect(),
            values: support.iter().map(|&i| f[i]).collect(),
            weights: w,
        };
        for (i, t) in z.iter().enumerate() {
            approx[i] = rational.eval(*t).unwrap_or(f64::INFINITY);
        }
        residual = max_residual(z, f, &rational);
        history.push(residual);
        if best.as_ref().map_or(true, |b| residual < b.2) {
            best = Some((support.clone(), rational.clone(), residual));
        }
        if residual <= tol {
            break;
        }
    }
    if let Some((s, r, res)) = best {
        support = s;
        rational = r;
        residual = res;
    }
    let mut removed = 0;
    if opts.cleanup {
        let (lo, hi) = (
            z.iter().cloned().fold(f64::INFINITY, f64::min),
            z.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        loop {
            let poles = rational.poles();
            let bad = poles.iter().find(|p| {
                p.re >= lo
                    && p.re <= hi
                    && p.im.abs() <= hi - lo
                    && rational.residue(**p).norm() < 1e-13 * scale
            });
            let Some(p) = bad else { break };
            if support.len() <= 1 {
                break;
            }
            let (k, _) = support
                .iter()
                .enumerate()
                .map(|(k, &i)| (k, (Complex::new(z[i], 0.0) - p).norm()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            support.remove(k);
            removed += 1;
            let w = weights_for(z, f, &support)?;
            rational = Rational {
                support: support.iter().map(|&i| z[i]).collect(),
                values: support.iter().map(|&i| f[i]).collect(),
                weights: w,
            };
            residual = max_residual(z, f, &rational);
        }
    }
    Ok(AaaFit {
        rational,
        residual,
        history,
        removed,
    })
}

/// Independent variable of the rational fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitVariable {
    /// `h_r` is rational in `t`.
    Time,
    /// `h_r` is rational in `t^p`, typically with `p` the recovered order.
    Power(f64),
}

impl FitVariable {
    pub fn map(&self, t: f64) -> f64 {
        match *self {
            FitVariable::Time => t,
            FitVariable::Power(p) => t.powf(p),
        }
    }
}

/// Settings for [`reduce_data`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub aaa: AaaOptions,
    pub variable: FitVariable,
    /// Samples with `t < t_min` are left out of the fit.
    pub t_min: f64,
    /// Fits whose sample residual exceeds `fit_tol * max|h|` are flagged.
    pub fit_tol: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            aaa: AaaOptions::default(),
            variable: FitVariable::Time,
            t_min: 1e-3,
            fit_tol: 1e-4,
        }
    }
}

/// Per-node fit report.
#[derive(Debug, Clone)]
pub struct NodeDiagnostic {
    pub node: usize,
    pub residual: f64,
    pub degree: usize,
    pub poles: Vec<Complex<f64>>,
    /// Real poles inside the extension window `[t_split, T]`, counted in
    /// the fit variable.
    pub poles_in_window: usize,
    /// The node used the constant-extension fallback.
    pub fallback: bool,
}

/// Reduced data and fit diagnostics.
#[derive(Debug, Clone)]
pub struct ReducedTrace {
    pub trace: BoundaryTrace,
    pub diagnostics: Vec<NodeDiagnostic>,
}

/// Replaces `h` by `h - h_r` on `t > t_split` and by zero before, where `h_r`
/// is the rational extension of the trace fitted on `[t_min, t_split]`.
pub fn reduce_data(h: &BoundaryTrace, t_split: f64, opts: &ContinuationOptions) -> Result<ReducedTrace> {
    let fit_idx: Vec<usize> = h
        .times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= opts.t_min && t <= t_split)
        .map(|(i, _)| i)
        .collect();
    let needed = 2 * opts.aaa.max_degree + 2;
    if fit_idx.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: fit_idx.len(),
        });
    }
    if let FitVariable::Power(p) = opts.variable {
        if !(p > 0.0) {
            return Err(Error::InvalidInput(format!("fit exponent must be positive, got {p}")));
        }
    }
    let var = opts.variable;
    let z_split = var.map(t_split);
    let z_end = var.map(h.times.last().copied().unwrap_or(t_split));
    let zt: Vec<f64> = fit_idx.iter().map(|&i| var.map(h.times[i])).collect();
    let mut out = BoundaryTrace::zeros(h.times.clone(), h.num_nodes());
    let mut diagnostics = Vec::with_capacity(h.num_nodes());
    for node in 0..h.num_nodes() {
        let series = h.node_series(node);
        let fv: Vec<f64> = fit_idx.iter().map(|&i| series[i]).collect();
        let scale = fv.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let fit = aaa_fit(&zt, &fv, &opts.aaa);
        let (rational, residual, poles) = match fit {
            Ok(f) => {
                let poles = f.rational.poles();
                (Some(f.rational), f.residual, poles)
            }
            Err(_) => (None, f64::INFINITY, Vec::new()),
        };
        let in_window = poles
            .iter()
            .filter(|p| p.im.abs() <= 1e-8 * z_end && p.re >= z_split && p.re <= z_end)
            .count();
        let mut fallback = rational.is_none() || residual > opts.fit_tol * scale || in_window > 0;
        let mut extension: Vec<f64> = Vec::new();
        if !fallback {
            let r = rational.as_ref().unwrap();
            for (i, &t) in h.times.iter().enumerate() {
                if t > t_split {
                    match r.eval(var.map(t)) {
                        Ok(v) if v.is_finite() => extension.push(v),
                        _ => {
                            fallback = true;
                            break;
                        }
                    }
                } else {
                    extension.push(series[i]);
                }
            }
        }
        if fallback {
            log::warn!("continuation fallback at boundary node {node} (residual {residual:e})");
            let last = *fv.last().unwrap();
            extension = vec![last; h.times.len()];
        }
        for (i, &t) in h.times.iter().enumerate() {
            out.values[i][node] = if t > t_split { series[i] - extension[i] } else { 0.0 };
        }
        diagnostics.push(NodeDiagnostic {
            node,
            residual,
            degree: rational.as_ref().map_or(0, |r| r.degree()),
            poles,
            poles_in_window: in_window,
            fallback,
        });
    }
    Ok(ReducedTrace {
        trace: out,
        diagnostics,
    })
}
