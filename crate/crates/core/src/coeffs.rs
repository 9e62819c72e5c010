//! Finite-difference extraction of the linearization `α = ∂_0φ(0)`,
//! `β = ∂_bφ(0)` and the curvatures `γ₁ = ∂_b²φ(0)`, `γ₂ = ∂_b∂_{-b}φ(0)`,
//! `γ₃ = ∂_b∂_{b'}φ(0)`, with `γ = γ₁ - γ₂`.

use serde::{Deserialize, Serialize};

use crate::driving::{minus, plus, smoothness_probe, DrivingSpec, SmoothnessVerdict, CENTER, DEFAULT_PROBE_STEPS, DEFAULT_PROBE_THRESHOLD};
use crate::error::{Error, Result};

pub const DEFAULT_FD_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// `|β|` at or below this is treated as zero (frozen branch).
pub const BETA_ZERO_TOL: f64 = 1e-8;
/// `|γ|` at or below this is treated as zero (heat branch).
pub const GAMMA_ZERO_TOL: f64 = 1e-6;

/// Absolute slack added to the direction-agreement test so that exactly
/// linear drivers, whose residual is pure round-off, are not rejected.
const DIRECTION_SPREAD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub phi0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Absent in one dimension, where no `b' ∉ {b, -b}` exists.
    pub gamma3: Option<f64>,
    pub gamma: f64,
    pub cross_b_spread: f64,
    pub extrapolation_residual: f64,
    pub fd_steps_used: Vec<f64>,
}

/// Which case of the scaling limit applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Kpz,
    Heat,
    Frozen,
}

pub fn classify_branch(beta: f64, gamma: f64) -> Branch {
    if beta.abs() <= BETA_ZERO_TOL {
        Branch::Frozen
    } else if gamma.abs() <= GAMMA_ZERO_TOL {
        Branch::Heat
    } else {
        Branch::Kpz
    }
}

impl CoefficientSet {
    pub fn branch(&self) -> Branch {
        classify_branch(self.beta, self.gamma)
    }
}

// Raw central-difference estimates at one step size.
struct Sample {
    alpha: f64,
    beta: Vec<f64>,
    gamma1: Vec<f64>,
    gamma2: Vec<f64>,
    gamma3: Vec<f64>,
}

fn sample(spec: &DrivingSpec, h: f64) -> Result<Sample> {
    let n = spec.stencil_len();
    let d = spec.dimension();
    let mut buf = vec![0.0; n];
    let mut at = |moves: &[(usize, f64)]| -> Result<f64> {
        buf.iter_mut().for_each(|b| *b = 0.0);
        for &(i, dv) in moves {
            buf[i] += dv;
        }
        spec.eval_slice(&buf)
    };
    let f0 = at(&[])?;
    let first = |at: &mut dyn FnMut(&[(usize, f64)]) -> Result<f64>, i: usize| -> Result<f64> {
        Ok((at(&[(i, h)])? - at(&[(i, -h)])?) / (2.0 * h))
    };
    let pure = |at: &mut dyn FnMut(&[(usize, f64)]) -> Result<f64>, i: usize| -> Result<f64> {
        Ok((at(&[(i, h)])? - 2.0 * f0 + at(&[(i, -h)])?) / (h * h))
    };
    let mixed = |at: &mut dyn FnMut(&[(usize, f64)]) -> Result<f64>, i: usize, j: usize| -> Result<f64> {
        Ok((at(&[(i, h), (j, h)])? - at(&[(i, h), (j, -h)])? - at(&[(i, -h), (j, h)])? + at(&[(i, -h), (j, -h)])?)
            / (4.0 * h * h))
    };

    let alpha = first(&mut at, CENTER)?;
    let mut beta = Vec::with_capacity(2 * d);
    let mut gamma1 = Vec::with_capacity(2 * d);
    for b in 1..n {
        beta.push(first(&mut at, b)?);
        gamma1.push(pure(&mut at, b)?);
    }
    let mut gamma2 = Vec::with_capacity(d);
    for i in 0..d {
        gamma2.push(mixed(&mut at, plus(i), minus(i))?);
    }
    let mut gamma3 = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            for (p, q) in [(plus(i), plus(j)), (plus(i), minus(j)), (minus(i), plus(j)), (minus(i), minus(j))] {
                gamma3.push(mixed(&mut at, p, q)?);
            }
        }
    }
    Ok(Sample { alpha, beta, gamma1, gamma2, gamma3 })
}

// Richardson extrapolation of an O(h²) sequence; returns (value, residual).
fn richardson(values: &[f64], steps: &[f64]) -> (f64, f64) {
    let extrapolate = |k: usize| {
        let r2 = (steps[k - 1] / steps[k]).powi(2);
        (r2 * values[k] - values[k - 1]) / (r2 - 1.0)
    };
    let last = values.len() - 1;
    let best = extrapolate(last);
    let residual = if values.len() >= 3 { (best - extrapolate(last - 1)).abs() } else { (best - values[last]).abs() };
    (best, residual)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn deviation(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).abs()).fold(0.0, f64::max)
}

/// Central differences at each step, one Richardson step over the two
/// smallest, per-direction estimates averaged.
pub fn extract_coefficients(spec: &DrivingSpec, steps: &[f64]) -> Result<CoefficientSet> {
    if steps.len() < 2 {
        return Err(Error::InvalidParameter("coefficient extraction needs at least 2 steps".into()));
    }
    if steps.iter().any(|h| !(*h > 0.0 && h.is_finite())) || steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("finite-difference steps must be positive and strictly decreasing".into()));
    }
    let probe = smoothness_probe(spec, &DEFAULT_PROBE_STEPS, DEFAULT_PROBE_THRESHOLD)?;
    if probe.verdict == SmoothnessVerdict::NonSmoothFlagged {
        return Err(Error::NonSmoothDriving { spread: probe.worst_spread });
    }

    let samples = steps.iter().map(|&h| sample(spec, h)).collect::<Result<Vec<_>>>()?;
    let mut residual = 0.0_f64;
    let mut extrap = |pick: &dyn Fn(&Sample) -> f64| {
        let values: Vec<f64> = samples.iter().map(pick).collect();
        let (v, r) = richardson(&values, steps);
        residual = residual.max(r);
        v
    };

    let alpha = extrap(&|s| s.alpha);
    let n_dir = samples[0].beta.len();
    let beta_dirs: Vec<f64> = (0..n_dir).map(|k| extrap(&|s| s.beta[k])).collect();
    let gamma1_dirs: Vec<f64> = (0..n_dir).map(|k| extrap(&|s| s.gamma1[k])).collect();
    let gamma2_dirs: Vec<f64> = (0..samples[0].gamma2.len()).map(|k| extrap(&|s| s.gamma2[k])).collect();
    let gamma3_dirs: Vec<f64> = (0..samples[0].gamma3.len()).map(|k| extrap(&|s| s.gamma3[k])).collect();

    let mut spread = deviation(&beta_dirs).max(deviation(&gamma1_dirs)).max(deviation(&gamma2_dirs));
    if !gamma3_dirs.is_empty() {
        spread = spread.max(deviation(&gamma3_dirs));
    }
    if spread > 100.0 * residual + DIRECTION_SPREAD_FLOOR {
        return Err(Error::InconsistentDirections { spread, residual });
    }

    let gamma1 = mean(&gamma1_dirs);
    let gamma2 = mean(&gamma2_dirs);
    Ok(CoefficientSet {
        phi0: spec.phi0()?,
        alpha,
        beta: mean(&beta_dirs),
        gamma1,
        gamma2,
        gamma3: (!gamma3_dirs.is_empty()).then(|| mean(&gamma3_dirs)),
        gamma: gamma1 - gamma2,
        cross_b_spread: spread,
        extrapolation_residual: residual,
        fd_steps_used: steps.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub checks: Vec<ConsistencyCheck>,
    pub branch: Branch,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConsistencyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Structural constraints a monotone, equivariant C² driver must obey.
pub fn check_coefficient_consistency(cs: &CoefficientSet, d: usize, tol: f64) -> ConsistencyReport {
    let sum = cs.alpha + 2.0 * d as f64 * cs.beta;
    let mut checks = vec![
        ConsistencyCheck { name: "sum_rule".into(), passed: (sum - 1.0).abs() <= tol, value: sum },
        ConsistencyCheck { name: "alpha_nonnegative".into(), passed: cs.alpha >= -tol, value: cs.alpha },
        ConsistencyCheck { name: "beta_nonnegative".into(), passed: cs.beta >= -tol, value: cs.beta },
    ];
    if cs.beta.abs() <= tol {
        let worst = [cs.gamma1, cs.gamma2, cs.gamma3.unwrap_or(0.0)].iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        checks.push(ConsistencyCheck { name: "flat_when_beta_zero".into(), passed: worst <= tol, value: worst });
    }
    ConsistencyReport { checks, branch: cs.branch() }
}
