//! Recovery of the fractional order from the small-time behaviour
//! `h(t) ~ c0 + c1 t^alpha` of the boundary trace at one point.
//!
//! The linear coefficients are eliminated (variable projection) and the
//! remaining one-dimensional residual is minimised by a grid scan followed
//! by golden-section refinement.

use crate::error::{Error, Result};
use crate::timefrac::log_spaced;

/// Weighted samples `(t_i, h_i)` with quadrature weights `w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    pub w: Vec<f64>,
}

impl Samples {
    /// Attaches trapezoid weights on the (sorted) sample times.
    pub fn with_trapezoid_weights(t: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if t.len() != h.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                got: h.len(),
            });
        }
        if t.len() < 3 {
            return Err(Error::InsufficientSamples {
                needed: 3,
                got: t.len(),
            });
        }
        if t.iter().any(|&x| !(x > 0.0)) || t.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidInput("sample times must be positive and increasing".into()));
        }
        let m = t.len();
        let w = (0..m)
            .map(|i| {
                let lo = if i == 0 { t[0] } else { t[i - 1] };
                let hi = if i + 1 == m { t[m - 1] } else { t[i + 1] };
                0.5 * (hi - lo)
            })
            .collect();
        Ok(Samples { t, h, w })
    }
}

/// Default sample times: 30 log-spaced points on `[t0 / 100, t0]`.
pub fn sample_times(t0: f64) -> Result<Vec<f64>> {
    log_spaced(t0 / 100.0, t0, 30)
}

/// Best linear coefficients for fixed `alpha` and the weighted residual norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerFit {
    pub c0: f64,
    pub c1: f64,
    pub residual: f64,
}

/// Weighted least squares for `h ~ c0 + c1 t^alpha` at fixed `alpha`.
///
/// Times are rescaled by their maximum and both columns are normalised
/// before a twice-orthogonalised Gram-Schmidt factorisation.
pub fn varpro_inner(s: &Samples, alpha: f64) -> Result<InnerFit> {
    let m = s.t.len();
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let tmax = s.t.iter().cloned().fold(0.0, f64::max);
    let sw: Vec<f64> = s.w.iter().map(|w| w.sqrt()).collect();
    let mut q0: Vec<f64> = sw.clone();
    let mut q1: Vec<f64> = s
        .t
        .iter()
        .zip(&sw)
        .map(|(t, w)| w * (t / tmax).powf(alpha))
        .collect();
    let b: Vec<f64> = s.h.iter().zip(&sw).map(|(h, w)| w * h).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let n0 = dot(&q0, &q0).sqrt();
    let n1 = dot(&q1, &q1).sqrt();
    if n0 == 0.0 || n1 == 0.0 {
        return Err(Error::DegenerateData("zero column in least-squares system".into()));
    }
    q0.iter_mut().for_each(|v| *v /= n0);
    q1.iter_mut().for_each(|v| *v /= n1);
    // A = [q0 q1] diag(n0, n1); QR of [q0 q1] = [e0 e1] R.
    let r00 = 1.0;
    let mut r01 = 0.0;
    for _ in 0..2 {
        let p = dot(&q0, &q1);
        r01 += p;
        q1.iter_mut().zip(&q0).for_each(|(a, b)| *a -= p * b);
    }
    let r11 = dot(&q1, &q1).sqrt();
    if r11 < 1e-14 {
        return Err(Error::DegenerateData("columns 1 and t^alpha are collinear".into()));
    }
    q1.iter_mut().for_each(|v| *v /= r11);
    let y0 = dot(&q0, &b);
    let y1 = dot(&q1, &b);
    let z1 = y1 / r11;
    let z0 = (y0 - r01 * z1) / r00;
    let c0 = z0 / n0;
    let c1 = z1 / n1 / tmax.powf(alpha);
    let residual = s
        .t
        .iter()
        .zip(&s.h)
        .zip(&s.w)
        .map(|((t, h), w)| w * (c0 + c1 * t.powf(alpha) - h).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(InnerFit { c0, c1, residual })
}

/// Search settings for [`fit_order`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderOptions {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub grid_points: usize,
    pub tol: f64,
}

impl Default for OrderOptions {
    fn default() -> Self {
        OrderOptions {
            alpha_lo: 0.01,
            alpha_hi: 0.99,
            grid_points: 50,
            tol: 1e-6,
        }
    }
}

/// Result of the order fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub alpha: f64,
    pub c0: f64,
    pub c1: f64,
    pub residual: f64,
    /// Residual on the scan grid, `(alpha, r(alpha))`.
    pub profile: Vec<(f64, f64)>,
}

/// Estimates `alpha` by minimising the projected residual.
pub fn fit_order(s: &Samples, opts: &OrderOptions) -> Result<OrderFit> {
    let (lo, hi) = (opts.alpha_lo, opts.alpha_hi);
    if !(lo > 0.0 && hi < 1.0 + 1e-12 && lo < hi) || opts.grid_points < 3 {
        return Err(Error::InvalidInput(format!("bad order bounds [{lo}, {hi}]")));
    }
    let g = opts.grid_points;
    let grid: Vec<f64> = (0..g).map(|i| lo + (hi - lo) * i as f64 / (g - 1) as f64).collect();
    let profile: Vec<(f64, f64)> = grid
        .iter()
        .map(|&a| varpro_inner(s, a).map(|f| (a, f.residual)))
        .collect::<Result<_>>()?;
    let rmin = profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let rmax = profile.iter().map(|p| p.1).fold(0.0, f64::max);
    let mean = s.h.iter().sum::<f64>() / s.h.len() as f64;
    let spread = s
        .h
        .iter()
        .zip(&s.w)
        .map(|(h, w)| w * (h - mean).powi(2))
        .sum::<f64>()
        .sqrt();
    if rmax - rmin <= 1e-14 * spread || spread == 0.0 {
        return Err(Error::DegenerateData("residual is flat in alpha".into()));
    }
    let imin = profile
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .unwrap()
        .0;
    let mut a = grid[imin.saturating_sub(1)];
    let mut b = grid[(imin + 1).min(g - 1)];
    let r = |x: f64| varpro_inner(s, x).map(|f| f.residual);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = r(x1)?;
    let mut f2 = r(x2)?;
    while b - a > opts.tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = r(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = r(x2)?;
        }
    }
    let mut alpha = 0.5 * (a + b);
    let mut best = varpro_inner(s, alpha)?;
    // Parabolic polish on r^2, which is smooth at the minimiser.
    let mut width = (b - a).max(1e-9);
    for _ in 0..4 {
        let (xl, xr) = (alpha - width, alpha + width);
        if xl <= lo || xr >= hi {
            break;
        }
        let (fl, fm, fr) = (r(xl)?.powi(2), best.residual.powi(2), r(xr)?.powi(2));
        let curv = fl - 2.0 * fm + fr;
        if !(curv > 0.0) {
            break;
        }
        let x = alpha + 0.5 * width * (fl - fr) / curv;
        let cand = varpro_inner(s, x)?;
        if !(cand.residual < best.residual) {
            break;
        }
        width = (x - alpha).abs().max(1e-12);
        alpha = x;
        best = cand;
    }
    // The grid minimum can beat the bracket interior at the bounds.
    if profile[imin].1 < best.residual {
        alpha = grid[imin];
        best = varpro_inner(s, alpha)?;
    }
    Ok(OrderFit {
        alpha,
        c0: best.c0,
        c1: best.c1,
        residual: best.residual,
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unequal_lengths_rejected() {
        assert!(Samples::with_trapezoid_weights(vec![1.0, 2.0, 3.0], vec![1.0]).is_err());
    }

    #[test]
    fn constant_data_is_degenerate() {
        let t = sample_times(1e-3).unwrap();
        let h = vec![5.0; t.len()];
        let s = Samples::with_trapezoid_weights(t, h).unwrap();
        let inner = varpro_inner(&s, 0.5).unwrap();
        assert!((inner.c0 - 5.0).abs() < 1e-12);
        assert!(inner.c1.abs() < 1e-8);
        assert!(inner.residual < 1e-12);
        assert!(matches!(
            fit_order(&s, &OrderOptions::default()),
            Err(Error::DegenerateData(_))
        ));
    }
}
