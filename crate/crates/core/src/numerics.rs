//! Small numerical building blocks shared by the driving catalog, the
//! continuum evaluators and the harness: Gauss–Hermite rules, adaptive
//! Simpson, the normal CDF, guarded floors and log-log line fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss–Hermite rule for the standard normal weight.
///
/// `nodes[i]`, `weights[i]` approximate `E[f(Z)]` for `Z ~ N(0,1)` as
/// `Σ weights[i] f(nodes[i])`. Weights are renormalized to sum to one so
/// constants are integrated to round-off.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("Gauss-Hermite order must be positive".into()));
        }
        let (x, w) = physicists_rule(order)?;
        let scale = std::f64::consts::SQRT_2;
        let nodes: Vec<f64> = x.iter().map(|xi| xi * scale).collect();
        let total: f64 = w.iter().sum();
        let weights = w.iter().map(|wi| wi / total).collect();
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `E[f(Z)]` under the rule.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

// Newton iteration on orthonormal Hermite polynomials, weight e^{-x^2}.
fn physicists_rule(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^{-1/4}
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..200 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::QuadratureNonConvergence {
                what: format!("Gauss-Hermite node {i} of {n}"),
                residual: f64::NAN,
            });
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    Ok((x, w))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Outcome of [`adaptive_simpson`]: the integral estimate of every
/// component and the accumulated error estimate.
#[derive(Debug, Clone, Copy)]
pub struct SimpsonEstimate<const N: usize> {
    pub value: [f64; N],
    pub residual: f64,
    pub converged: bool,
}

/// Adaptive Simpson quadrature of a vector-valued integrand on `[a, b]`.
///
/// All components share one subdivision, so a ratio of two components is
/// computed from the same nodes. The local error test uses the max-norm
/// across components against `abs_tol`.
pub fn adaptive_simpson<const N: usize, F>(f: F, a: f64, b: f64, abs_tol: f64, max_depth: u32) -> SimpsonEstimate<N>
where
    F: Fn(f64) -> [f64; N],
{
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson_panel(a, b, &fa, &fm, &fb);
    let mut out = SimpsonEstimate { value: [0.0; N], residual: 0.0, converged: true };
    simpson_recurse(&f, a, b, fa, fm, fb, whole, abs_tol, max_depth, &mut out);
    out
}

fn simpson_panel<const N: usize>(a: f64, b: f64, fa: &[f64; N], fm: &[f64; N], fb: &[f64; N]) -> [f64; N] {
    let h = (b - a) / 6.0;
    let mut s = [0.0; N];
    for k in 0..N {
        s[k] = h * (fa[k] + 4.0 * fm[k] + fb[k]);
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<const N: usize, F>(
    f: &F,
    a: f64,
    b: f64,
    fa: [f64; N],
    fm: [f64; N],
    fb: [f64; N],
    whole: [f64; N],
    tol: f64,
    depth: u32,
    out: &mut SimpsonEstimate<N>,
) where
    F: Fn(f64) -> [f64; N],
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson_panel(a, m, &fa, &flm, &fm);
    let right = simpson_panel(m, b, &fm, &frm, &fb);
    let mut delta = 0.0_f64;
    for k in 0..N {
        delta = delta.max((left[k] + right[k] - whole[k]).abs());
    }
    if delta <= 15.0 * tol || depth == 0 {
        if delta > 15.0 * tol {
            out.converged = false;
        }
        out.residual += delta / 15.0;
        for k in 0..N {
            let refined = left[k] + right[k];
            out.value[k] += refined + (refined - whole[k]) / 15.0;
        }
        return;
    }
    simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, out);
    simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, out);
}

/// Composite Simpson weights for `intervals` (even) panels on `[a, b]`.
pub fn simpson_nodes(a: f64, b: f64, intervals: usize) -> Vec<(f64, f64)> {
    debug_assert!(intervals >= 2 && intervals % 2 == 0);
    let h = (b - a) / intervals as f64;
    (0..=intervals)
        .map(|i| {
            let w = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (a + h * i as f64, w * h / 3.0)
        })
        .collect()
}

/// `floor(v)`, except that values within a relative `1e-9` of an integer
/// snap to that integer. Keeps `1/0.1^2` at 100 rather than 99.
pub fn guarded_floor(v: f64) -> i64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as i64
    } else {
        v.floor() as i64
    }
}

/// Least-squares line `y = slope * x + intercept` with RMS residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Some(LineFit { slope, intercept, residual: (ss / n).sqrt() })
}

/// Fit `log y` against `log x`, skipping non-positive entries.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    fit_line(&lx, &ly)
}
