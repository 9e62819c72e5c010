//! Lazy random walk kernels, their Gaussian approximation and the
//! random-walk representation of the surface.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{extract_coefficients, CoefficientSet, DEFAULT_FD_STEPS};
use crate::driving::DrivingSpec;
use crate::error::{Error, Result};
use crate::lattice::{compute_h_field, evolve_with, HField, InitialData, LatticeBox};
use crate::numerics::{fit_loglog, LineFit};

/// Transition probabilities `p(t, ·)` of the walk that stays put with
/// probability `α` and steps to each neighbor with probability `β`.
/// Stored densely on `[-t, t]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkKernel {
    pub alpha: f64,
    pub beta: f64,
    pub dimension: usize,
    pub t: usize,
    domain: LatticeBox,
    mass: Vec<f64>,
}

impl WalkKernel {
    pub fn domain(&self) -> &LatticeBox {
        &self.domain
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// `p(t, x)`, zero outside the light cone.
    pub fn get(&self, site: &[i64]) -> f64 {
        self.domain.index(site).map_or(0.0, |i| self.mass[i])
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }
}

fn check_probabilities(alpha: f64, beta: f64, d: usize) -> Result<()> {
    crate::driving::check_dimension(d)?;
    let sum = alpha + 2.0 * d as f64 * beta;
    if !(alpha >= 0.0 && beta >= 0.0 && (sum - 1.0).abs() <= 1e-10) {
        return Err(Error::InvalidParameter(format!(
            "walk probabilities need alpha, beta >= 0 and alpha + 2d beta = 1, got alpha={alpha}, beta={beta}, d={d}"
        )));
    }
    Ok(())
}

/// `p(t, ·)` by `t` applications of `p ← α p + β Σ_b p(· - b)` from a
/// point mass at the origin.
pub fn kernel_exact(alpha: f64, beta: f64, d: usize, t: usize) -> Result<WalkKernel> {
    check_probabilities(alpha, beta, d)?;
    Ok(kernel_sequence(alpha, beta, d, t).pop().expect("sequence is nonempty"))
}

/// `p(0, ·), …, p(t_max, ·)` without checking that the weights form a
/// probability vector. The recursion is linear, so the representation
/// identity holds for any weights.
pub(crate) fn kernel_sequence(alpha: f64, beta: f64, d: usize, t_max: usize) -> Vec<WalkKernel> {
    let origin = vec![0_i64; d];
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(WalkKernel {
        alpha,
        beta,
        dimension: d,
        t: 0,
        domain: LatticeBox::around(&origin, 0).expect("nonempty"),
        mass: vec![1.0],
    });
    for t in 1..=t_max {
        let prev = &out[t - 1];
        let domain = LatticeBox::around(&origin, t as i64).expect("nonempty");
        let mut mass = vec![0.0; domain.len()];
        let mut nb = vec![0_i64; d];
        for (i, m) in mass.iter_mut().enumerate() {
            let site = domain.site(i);
            let mut acc = alpha * prev.get(&site);
            let mut s = 0.0;
            for a in 0..d {
                nb.copy_from_slice(&site);
                nb[a] -= 1;
                s += prev.get(&nb);
                nb[a] += 2;
                s += prev.get(&nb);
            }
            acc += beta * s;
            *m = acc;
        }
        out.push(WalkKernel { alpha, beta, dimension: d, t, domain, mass });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParityMode {
    Aperiodic,
    /// Doubled on sites whose coordinate sum has the parity of `t`, zero
    /// elsewhere. For walks that never stay put.
    Periodic,
}

/// `p₃(t, x) = (4πβt)^{-d/2} exp(-|x|²/4βt)`, parity-adjusted in
/// periodic mode.
pub fn kernel_gaussian(t: usize, x: &[i64], beta: f64, mode: ParityMode) -> f64 {
    let tf = t as f64;
    let r2: f64 = x.iter().map(|&xi| (xi * xi) as f64).sum();
    let base = (4.0 * std::f64::consts::PI * beta * tf).powf(-(x.len() as f64) / 2.0) * (-r2 / (4.0 * beta * tf)).exp();
    match mode {
        ParityMode::Aperiodic => base,
        ParityMode::Periodic => {
            let s: i64 = x.iter().sum();
            if (s - t as i64).rem_euclid(2) == 0 {
                2.0 * base
            } else {
                0.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub t: usize,
    /// `sup_x |p(t,x) - p₃(t,x)|`
    pub sup_err: f64,
    /// `sup_err · t^{(d+2)/2}`
    pub scaled_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub alpha: f64,
    pub beta: f64,
    pub dimension: usize,
    pub parity_mode: ParityMode,
    pub rows: Vec<ErrorRow>,
    /// Minus the log-log slope of `sup_err` against `t`.
    pub fitted_order: Option<f64>,
    pub fit: Option<LineFit>,
}

impl ErrorTable {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_err < w[0].sup_err)
    }

    pub fn to_csv(&self) -> String {
        let order = self.fitted_order.map_or_else(|| "nan".to_string(), |o| o.to_string());
        let mut out = String::from("t,sup_err,scaled_err,fitted_order\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.t, r.sup_err, r.scaled_err, order));
        }
        out
    }
}

/// Local CLT diagnostics for the walk at each listed time.
pub fn clt_error_table(alpha: f64, beta: f64, d: usize, times: &[usize]) -> Result<ErrorTable> {
    check_probabilities(alpha, beta, d)?;
    if times.is_empty() || times[0] < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("times must be increasing and at least 2".into()));
    }
    let mode = if alpha == 0.0 { ParityMode::Periodic } else { ParityMode::Aperiodic };
    let rows: Vec<ErrorRow> = times
        .par_iter()
        .map(|&t| {
            let k = kernel_sequence(alpha, beta, d, t).pop().expect("nonempty");
            let sup_err = (0..k.domain.len())
                .map(|i| (k.mass[i] - kernel_gaussian(t, &k.domain.site(i), beta, mode)).abs())
                .fold(0.0, f64::max);
            ErrorRow { t, sup_err, scaled_err: sup_err * (t as f64).powf((d as f64 + 2.0) / 2.0) }
        })
        .collect();
    let ts: Vec<f64> = rows.iter().map(|r| r.t as f64).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.sup_err).collect();
    let fit = fit_loglog(&ts, &es);
    Ok(ErrorTable { alpha, beta, dimension: d, parity_mode: mode, rows, fitted_order: fit.map(|f| -f.slope), fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRow {
    pub site: Vec<i64>,
    pub direct: f64,
    pub reconstructed: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub coefficients: CoefficientSet,
    pub epsilon: f64,
    pub t_steps: usize,
    pub rows: Vec<ReconstructionRow>,
    pub max_residual: f64,
}

/// Compare `f_ε(t, x)` from direct evolution with
/// `Σ_y p(t,x-y) g_ε(y) + Σ_{s<t} Σ_y p(s,x-y) h_ε(t-s,y) + tφ(0)`.
pub fn reconstruct_via_representation(
    g: &InitialData,
    spec: &DrivingSpec,
    epsilon: f64,
    t_steps: usize,
    targets: &[Vec<i64>],
) -> Result<ReconstructionReport> {
    if t_steps == 0 {
        return Err(Error::InvalidParameter("reconstruction needs at least one step".into()));
    }
    if targets.is_empty() {
        return Err(Error::InvalidParameter("no target sites".into()));
    }
    let d = spec.dimension();
    if let Some(bad) = targets.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: bad.len() });
    }
    let cs = extract_coefficients(spec, &DEFAULT_FD_STEPS)?;
    let r = t_steps as i64;
    let lo: Vec<i64> = (0..d).map(|a| targets.iter().map(|s| s[a]).min().expect("nonempty") - r).collect();
    let hi: Vec<i64> = (0..d).map(|a| targets.iter().map(|s| s[a]).max().expect("nonempty") + r).collect();
    let domain = LatticeBox::new(lo, hi)?;

    let mut fields: Vec<HField> = Vec::with_capacity(t_steps);
    let last = evolve_with(g, spec, epsilon, &domain, t_steps, |prev, next| {
        fields.push(compute_h_field(prev, next, &cs)?);
        Ok(())
    })?;
    let kernels = kernel_sequence(cs.alpha, cs.beta, d, t_steps);

    let rows: Vec<ReconstructionRow> = targets
        .par_iter()
        .map(|x| {
            let direct = last.height(x).expect("target inside final box");
            // Σ_y p(t, x-y) g_ε(y)
            let kt = &kernels[t_steps];
            let mut rec = 0.0;
            for (i, p) in kt.mass.iter().enumerate() {
                let z = kt.domain.site(i);
                let y: Vec<i64> = x.iter().zip(&z).map(|(xi, zi)| xi - zi).collect();
                rec += p * g.lattice_value(epsilon, &y);
            }
            for (s, ks) in kernels.iter().enumerate().take(t_steps) {
                let h = &fields[t_steps - s - 1];
                for (i, p) in ks.mass.iter().enumerate() {
                    let z = ks.domain.site(i);
                    let y: Vec<i64> = x.iter().zip(&z).map(|(xi, zi)| xi - zi).collect();
                    rec += p * h.value(&y).expect("h field covers the light cone");
                }
            }
            rec += t_steps as f64 * cs.phi0;
            ReconstructionRow { site: x.clone(), direct, reconstructed: rec, residual: (direct - rec).abs() }
        })
        .collect();
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(ReconstructionReport { coefficients: cs, epsilon, t_steps, rows, max_residual })
}
