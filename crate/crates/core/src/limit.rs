//! Continuum solutions of `∂_t f = β Δf + γ |∇f|²` with Lipschitz data.
//!
//! With `b = γ/β` the Cole–Hopf transform gives
//! `f(t,x) = b⁻¹ log ∫ K(t, x-y) e^{b g(y)} dy`, `K(t,x) = (4πβt)^{-d/2} e^{-|x|²/4βt}`.
//! For `γ = 0` the solution is the heat convolution; for `β = 0` it is `g`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{classify_branch, Branch, CoefficientSet};
use crate::error::{Error, Result};
use crate::lattice::InitialData;
use crate::numerics::{gauss_legendre, simpson_nodes, GaussHermite};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub tol: f64,
    pub max_points_per_axis: usize,
    pub gradient_fd_step: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_points_per_axis: 8193, gradient_fd_step: 1e-3 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidParameter(format!("quadrature tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_points_per_axis < 16 {
            return Err(Error::InvalidParameter("max_points_per_axis must be at least 16".into()));
        }
        if !(self.gradient_fd_step > 0.0 && self.gradient_fd_step.is_finite()) {
            return Err(Error::InvalidParameter("gradient_fd_step must be positive".into()));
        }
        Ok(())
    }
}

/// Quadrature result with the change seen at the last refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitValue {
    pub value: f64,
    pub refinement_delta: f64,
    pub points_per_axis: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitGradient {
    pub gradient: Vec<f64>,
    pub norm: f64,
    /// `L√d`
    pub bound: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuhamelReport {
    pub lhs: f64,
    pub heat_part: f64,
    pub nonlinear_part: f64,
    pub residual: f64,
    pub time_intervals: usize,
}

#[derive(Debug, Clone)]
pub struct LimitEvaluator {
    pub g: InitialData,
    pub beta: f64,
    pub gamma: f64,
    pub branch: Branch,
    /// `γ/β` on the KPZ branch.
    pub b_ratio: Option<f64>,
    pub quadrature: QuadratureConfig,
}

impl LimitEvaluator {
    pub fn new(g: InitialData, beta: f64, gamma: f64, quadrature: QuadratureConfig) -> Result<Self> {
        quadrature.validate()?;
        if !(beta.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidParameter("beta and gamma must be finite".into()));
        }
        let branch = classify_branch(beta, gamma);
        if branch != Branch::Frozen && beta < 0.0 {
            return Err(Error::InvalidParameter(format!("beta must be nonnegative, got {beta}")));
        }
        let b_ratio = (branch == Branch::Kpz).then(|| gamma / beta);
        Ok(Self { g, beta, gamma, branch, b_ratio, quadrature })
    }

    pub fn from_coefficients(g: InitialData, cs: &CoefficientSet, quadrature: QuadratureConfig) -> Result<Self> {
        Self::new(g, cs.beta, cs.gamma, quadrature)
    }

    pub fn dimension(&self) -> usize {
        self.g.dimension
    }

    /// Half-width of the integration box around `x`.
    pub fn truncation_radius(&self, t: f64) -> f64 {
        let s = (4.0 * self.beta * t).sqrt();
        let tail = (2.0 * (1.0 / self.quadrature.tol).ln()).sqrt();
        let tilt = match self.branch {
            Branch::Kpz => self.gamma.abs() * self.g.lipschitz * s / (2.0 * self.beta),
            _ => 0.0,
        };
        s * (tail + tilt) + s
    }

    pub fn cole_hopf_eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.evaluate_detailed(t, x).map(|v| v.value)
    }

    pub fn evaluate_detailed(&self, t: f64, x: &[f64]) -> Result<LimitValue> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch { expected: self.dimension(), found: x.len() });
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("time must be finite and nonnegative, got {t}")));
        }
        if t == 0.0 || self.branch == Branch::Frozen {
            return Ok(LimitValue { value: self.g.value(x), refinement_delta: 0.0, points_per_axis: 1, radius: 0.0 });
        }
        let radius = self.truncation_radius(t);
        let mut level = 0;
        let mut prev = self.tensor_sum(t, x, &self.axis_rule(t, x, radius, level));
        loop {
            level += 1;
            let axis = self.axis_rule(t, x, radius, level);
            if axis.len() > self.quadrature.max_points_per_axis {
                return Err(Error::QuadratureNonConvergence {
                    what: format!("limit at t={t}, x={x:?}"),
                    residual: f64::NAN,
                });
            }
            let next = self.tensor_sum(t, x, &axis);
            let delta = (next - prev).abs();
            if delta < self.quadrature.tol {
                return Ok(LimitValue { value: next, refinement_delta: delta, points_per_axis: axis.len(), radius });
            }
            prev = next;
        }
    }

    /// Offsets `z` and log-weights `log w - z²/4βt` on `[-R, R]`.
    ///
    /// Smooth data: trapezoid with `16·2^level + 1` points, spectrally
    /// accurate against the Gaussian. One-dimensional data with kinks:
    /// `2^level` panels of 16-point Gauss–Legendre on each piece between
    /// kinks.
    fn axis_rule(&self, t: f64, x: &[f64], radius: f64, level: u32) -> Vec<(f64, f64)> {
        let four_bt = 4.0 * self.beta * t;
        let panels = 16usize << level;
        let kinks = if self.dimension() == 1 { self.g.profile.kinks_1d() } else { Vec::new() };
        let mut cuts = vec![-radius];
        cuts.extend(kinks.iter().map(|k| k - x[0]).filter(|z| z.abs() < radius));
        cuts.push(radius);
        let mut nodes = Vec::new();
        if cuts.len() == 2 {
            let h = 2.0 * radius / panels as f64;
            for i in 0..=panels {
                let z = -radius + h * i as f64;
                let w = if i == 0 || i == panels { 0.5 * h } else { h };
                nodes.push((z, w));
            }
        } else {
            let (gx, gw) = gauss_legendre(16);
            let per_piece = 1usize << level;
            for seg in cuts.windows(2) {
                let h = (seg[1] - seg[0]) / per_piece as f64;
                for k in 0..per_piece {
                    let mid = seg[0] + h * (k as f64 + 0.5);
                    nodes.extend(gx.iter().zip(&gw).map(|(x, w)| (mid + 0.5 * h * x, 0.5 * h * w)));
                }
            }
        }
        nodes.into_iter().map(|(z, w)| (z, w.ln() - z * z / four_bt)).collect()
    }

    // Tensor product of `axis` on `x + [-R, R]^d`.
    fn tensor_sum(&self, t: f64, x: &[f64], axis: &[(f64, f64)]) -> f64 {
        let d = self.dimension();
        let n = axis.len();
        let log_norm = -(d as f64) / 2.0 * (std::f64::consts::PI * 4.0 * self.beta * t).ln();

        // Each outer index reduces its own slab; slabs are combined in index order.
        let slab = |i0: usize| -> (f64, f64) {
            let mut y = x.to_vec();
            let mut idx = vec![0usize; d];
            idx[0] = i0;
            let inner = n.pow(d as u32 - 1);
            let mut terms = Vec::with_capacity(inner);
            for k in 0..inner {
                let mut rem = k;
                for a in (1..d).rev() {
                    idx[a] = rem % n;
                    rem /= n;
                }
                let mut lw = 0.0;
                for a in 0..d {
                    let (z, l) = axis[idx[a]];
                    y[a] = x[a] + z;
                    lw += l;
                }
                terms.push((lw, self.g.value(&y)));
            }
            match self.b_ratio {
                Some(b) => {
                    let m = terms.iter().map(|(lw, gv)| lw + b * gv).fold(f64::NEG_INFINITY, f64::max);
                    (m, terms.iter().map(|(lw, gv)| (lw + b * gv - m).exp()).sum())
                }
                None => (0.0, terms.iter().map(|(lw, gv)| lw.exp() * gv).sum()),
            }
        };
        let parts: Vec<(f64, f64)> = if d == 1 {
            (0..n).map(slab).collect()
        } else {
            (0..n).into_par_iter().map(slab).collect()
        };
        match self.b_ratio {
            Some(b) => {
                let m = parts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = parts.iter().map(|(pm, ps)| ps * (pm - m).exp()).sum();
                (m + s.ln() + log_norm) / b
            }
            None => parts.iter().map(|p| p.1).sum::<f64>() * log_norm.exp(),
        }
    }

    /// `∇f(t, x)` by central differences at steps `h` and `h/2`, one
    /// Richardson step.
    pub fn limit_gradient(&self, t: f64, x: &[f64]) -> Result<LimitGradient> {
        let gradient = self.gradient_vector(t, x)?;
        let norm = gradient.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = self.g.lipschitz * (self.dimension() as f64).sqrt();
        Ok(LimitGradient { within_bound: norm <= bound + 1e-6, gradient, norm, bound })
    }

    fn gradient_vector(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let h = self.quadrature.gradient_fd_step;
        let mut y = x.to_vec();
        let mut out = Vec::with_capacity(x.len());
        for a in 0..x.len() {
            let mut diff = |step: f64| -> Result<f64> {
                y[a] = x[a] + step;
                let up = self.cole_hopf_eval(t, &y)?;
                y[a] = x[a] - step;
                let down = self.cole_hopf_eval(t, &y)?;
                y[a] = x[a];
                Ok((up - down) / (2.0 * step))
            };
            let coarse = diff(h)?;
            let fine = diff(0.5 * h)?;
            out.push((4.0 * fine - coarse) / 3.0);
        }
        Ok(out)
    }

    /// Both sides of `f(t,x) = ∫K(t,x-y)g(y)dy + γ∫₀ᵗ∫K(s,x-y)|∇f|²(t-s,y)dy ds`
    /// in one dimension.
    pub fn duhamel_residual(&self, t: f64, x: &[f64]) -> Result<DuhamelReport> {
        if self.dimension() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: self.dimension() });
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("duhamel check needs t > 0, got {t}")));
        }
        let lhs = self.cole_hopf_eval(t, x)?;
        let heat = LimitEvaluator::new(self.g.clone(), self.beta, 0.0, self.quadrature)?;
        let heat_part = heat.cole_hopf_eval(t, x)?;
        if self.branch != Branch::Kpz {
            return Ok(DuhamelReport { lhs, heat_part, nonlinear_part: 0.0, residual: (lhs - heat_part).abs(), time_intervals: 0 });
        }

        let gh = GaussHermite::new(48)?;
        let x0 = x[0];
        // E[|∇f|²(t-s, x + √(2βs) Z)]
        let integrand = |s: f64| -> Result<f64> {
            let spread = (2.0 * self.beta * s).sqrt();
            let mut acc = 0.0;
            for (z, w) in gh.nodes.iter().zip(&gh.weights) {
                let y = [x0 + spread * z];
                let gv = self.gradient_vector(t - s, &y)?;
                acc += w * gv[0] * gv[0];
                if spread == 0.0 {
                    return Ok(gv[0] * gv[0]);
                }
            }
            Ok(acc)
        };
        let eval_nodes = |intervals: usize| -> Result<f64> {
            let nodes = simpson_nodes(0.0, t, intervals);
            let vals: Result<Vec<f64>> = nodes.par_iter().map(|(s, _)| integrand(*s)).collect();
            Ok(nodes.iter().zip(vals?).map(|((_, w), v)| w * v).sum())
        };
        let time_tol = (self.quadrature.tol * 1e3).max(1e-9);
        let mut intervals = 8;
        let mut prev = eval_nodes(intervals)?;
        loop {
            intervals *= 2;
            let next = eval_nodes(intervals)?;
            if (next - prev).abs() < time_tol {
                let nonlinear_part = self.gamma * next;
                let rhs = heat_part + nonlinear_part;
                return Ok(DuhamelReport { lhs, heat_part, nonlinear_part, residual: (lhs - rhs).abs(), time_intervals: intervals });
            }
            if intervals >= 1024 {
                return Err(Error::QuadratureNonConvergence { what: "duhamel time integral".into(), residual: (next - prev).abs() });
            }
            prev = next;
        }
    }
}
