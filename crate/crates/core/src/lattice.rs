//! Exact evolution of the discrete surface on shrinking light-cone boxes.
//!
//! A radius-one stencil means `f(t, x)` depends only on `f(0, ·)` within
//! lattice distance `t` of `x`. Each step therefore drops one layer from
//! every face of the box and never needs a boundary condition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientSet;
use crate::driving::{stencil_len, DrivingSpec, CENTER};
use crate::error::{Error, Result};
use crate::numerics::guarded_floor;

pub const DEFAULT_MEMORY_CAP: u128 = 2 << 30;

/// Axis-aligned integer box with inclusive bounds, stored row-major with
/// the last axis fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidParameter("box bounds must have equal, nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::EmptyDomain);
        }
        Ok(Self { lo, hi })
    }

    /// `center ± radius` in every axis.
    pub fn around(center: &[i64], radius: i64) -> Result<Self> {
        Self::new(center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
    }

    pub fn dimension(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn extent(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis] + 1) as usize
    }

    pub fn len(&self) -> usize {
        (0..self.dimension()).map(|a| self.extent(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        site.len() == self.dimension() && site.iter().zip(self.lo.iter().zip(&self.hi)).all(|(s, (l, h))| l <= s && s <= h)
    }

    /// `box ⊆ self` shrunk by `margin` on every face.
    pub fn contains_box(&self, other: &LatticeBox, margin: i64) -> bool {
        other.dimension() == self.dimension()
            && (0..self.dimension()).all(|a| other.lo[a] >= self.lo[a] + margin && other.hi[a] <= self.hi[a] - margin)
    }

    pub fn strides(&self) -> Vec<usize> {
        let d = self.dimension();
        let mut s = vec![1; d];
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.extent(a + 1);
        }
        s
    }

    pub fn index(&self, site: &[i64]) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let strides = self.strides();
        Some(site.iter().zip(&self.lo).zip(&strides).map(|((s, l), st)| (s - l) as usize * st).sum())
    }

    pub fn site(&self, mut index: usize) -> Vec<i64> {
        let strides = self.strides();
        let mut out = Vec::with_capacity(self.dimension());
        for (a, st) in strides.iter().enumerate() {
            out.push(self.lo[a] + (index / st) as i64);
            index %= st;
        }
        out
    }

    /// The box with one layer removed from every face, if nonempty.
    pub fn shrink(&self) -> Option<LatticeBox> {
        if (0..self.dimension()).any(|a| self.extent(a) < 3) {
            return None;
        }
        Some(LatticeBox { lo: self.lo.iter().map(|l| l + 1).collect(), hi: self.hi.iter().map(|h| h - 1).collect() })
    }

    pub fn sites(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(|i| self.site(i))
    }
}

/// Lipschitz initial profiles `g: R^d -> R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum InitialProfile {
    /// `a · x`
    Linear { slope: Vec<f64> },
    /// `A cos(k · x)`
    Cosine { amplitude: f64, wavevector: Vec<f64> },
    /// `min(|x|, M)`
    CappedAbs { cap: f64 },
    Constant { value: f64 },
}

impl InitialProfile {
    /// Lipschitz constant known in closed form for the profile.
    pub fn analytic_lipschitz(&self) -> f64 {
        match self {
            InitialProfile::Linear { slope } => slope.iter().map(|a| a.abs()).sum(),
            InitialProfile::Cosine { amplitude, wavevector } => amplitude.abs() * wavevector.iter().map(|k| k.abs()).sum::<f64>(),
            InitialProfile::CappedAbs { .. } => 1.0,
            InitialProfile::Constant { .. } => 0.0,
        }
    }

    /// Points where a one-dimensional profile is not smooth.
    pub fn kinks_1d(&self) -> Vec<f64> {
        match self {
            InitialProfile::CappedAbs { cap } if *cap > 0.0 => vec![-cap, 0.0, *cap],
            InitialProfile::CappedAbs { .. } => Vec::new(),
            _ => Vec::new(),
        }
    }

    fn axis_len(&self) -> Option<usize> {
        match self {
            InitialProfile::Linear { slope } => Some(slope.len()),
            InitialProfile::Cosine { wavevector, .. } => Some(wavevector.len()),
            _ => None,
        }
    }
}

/// A profile bound to a dimension and a Lipschitz constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub profile: InitialProfile,
    pub dimension: usize,
    pub lipschitz: f64,
}

impl InitialData {
    pub fn new(profile: InitialProfile, dimension: usize) -> Result<Self> {
        let lipschitz = profile.analytic_lipschitz();
        Self::with_lipschitz(profile, dimension, lipschitz)
    }

    /// Use a caller-supplied Lipschitz constant; it may not undercut the
    /// analytic one.
    pub fn with_lipschitz(profile: InitialProfile, dimension: usize, lipschitz: f64) -> Result<Self> {
        crate::driving::check_dimension(dimension)?;
        if let Some(n) = profile.axis_len() {
            if n != dimension {
                return Err(Error::DimensionMismatch { expected: dimension, found: n });
            }
        }
        let finite = match &profile {
            InitialProfile::Linear { slope } => slope.iter().all(|a| a.is_finite()),
            InitialProfile::Cosine { amplitude, wavevector } => amplitude.is_finite() && wavevector.iter().all(|k| k.is_finite()),
            InitialProfile::CappedAbs { cap } => cap.is_finite() && *cap >= 0.0,
            InitialProfile::Constant { value } => value.is_finite(),
        };
        if !finite {
            return Err(Error::InvalidParameter("initial profile parameters must be finite (cap >= 0)".into()));
        }
        let analytic = profile.analytic_lipschitz();
        if !(lipschitz.is_finite() && lipschitz >= analytic - 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz constant {lipschitz} is below the profile's analytic constant {analytic}"
            )));
        }
        Ok(Self { profile, dimension, lipschitz })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.profile {
            InitialProfile::Linear { slope } => slope.iter().zip(x).map(|(a, xi)| a * xi).sum(),
            InitialProfile::Cosine { amplitude, wavevector } => {
                amplitude * wavevector.iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>().cos()
            }
            InitialProfile::CappedAbs { cap } => x.iter().map(|xi| xi * xi).sum::<f64>().sqrt().min(*cap),
            InitialProfile::Constant { value } => *value,
        }
    }

    /// `g_ε(site) = g(ε · site)`.
    pub fn lattice_value(&self, epsilon: f64, site: &[i64]) -> f64 {
        let x: Vec<f64> = site.iter().map(|s| epsilon * *s as f64).collect();
        self.value(&x)
    }
}

/// Heights of `f_ε(t, ·)` on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSlice {
    pub epsilon: f64,
    pub time_step: usize,
    pub domain: LatticeBox,
    pub heights: Vec<f64>,
}

impl SurfaceSlice {
    pub fn height(&self, site: &[i64]) -> Option<f64> {
        self.domain.index(site).map(|i| self.heights[i])
    }

    /// CSV with columns `x1..xd,height`.
    pub fn to_csv(&self) -> String {
        let d = self.domain.dimension();
        let mut out = String::new();
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",height\n");
        for (i, h) in self.heights.iter().enumerate() {
            for s in self.domain.site(i) {
                out.push_str(&format!("{s},"));
            }
            out.push_str(&format!("{h}\n"));
        }
        out
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

/// `f_ε(0, x) = g(εx)` on `domain`.
pub fn init_surface(g: &InitialData, epsilon: f64, domain: &LatticeBox) -> Result<SurfaceSlice> {
    check_epsilon(epsilon)?;
    if domain.dimension() != g.dimension {
        return Err(Error::DimensionMismatch { expected: g.dimension, found: domain.dimension() });
    }
    let heights = (0..domain.len()).map(|i| g.lattice_value(epsilon, &domain.site(i))).collect();
    Ok(SurfaceSlice { epsilon, time_step: 0, domain: domain.clone(), heights })
}

const PARALLEL_THRESHOLD: usize = 1 << 14;

/// One synchronous update `f(t+1, x) = φ((f(t, x+a))_a)` on the shrunken box.
pub fn evolve_step(slice: &SurfaceSlice, spec: &DrivingSpec) -> Result<SurfaceSlice> {
    let d = slice.domain.dimension();
    if d != spec.dimension() {
        return Err(Error::DimensionMismatch { expected: spec.dimension(), found: d });
    }
    let next = slice.domain.shrink().ok_or(Error::DomainExhausted { time_step: slice.time_step })?;
    let old_strides = slice.domain.strides();
    let row_len = next.extent(d - 1);
    let outer: Vec<usize> = (0..d - 1).map(|a| next.extent(a)).collect();
    let old = &slice.heights;

    let fill_row = |(r, row): (usize, &mut [f64])| -> Result<()> {
        // old index of the row's first site
        let mut rem = r;
        let mut base = 1; // +1 along the last axis
        for a in (0..d - 1).rev() {
            let c = rem % outer[a];
            rem /= outer[a];
            base += (c + 1) * old_strides[a];
        }
        let mut stencil = [0.0_f64; stencil_len(crate::driving::MAX_DIMENSION)];
        let stencil = &mut stencil[..stencil_len(d)];
        for (k, out) in row.iter_mut().enumerate() {
            let i = base + k;
            stencil[CENTER] = old[i];
            for (a, st) in old_strides.iter().enumerate() {
                stencil[1 + 2 * a] = old[i + st];
                stencil[2 + 2 * a] = old[i - st];
            }
            *out = spec.eval_slice(stencil)?;
        }
        Ok(())
    };

    let mut heights = vec![0.0; next.len()];
    if heights.len() >= PARALLEL_THRESHOLD && d > 1 {
        heights.par_chunks_mut(row_len).enumerate().try_for_each(fill_row)?;
    } else {
        heights.chunks_mut(row_len).enumerate().try_for_each(fill_row)?;
    }
    Ok(SurfaceSlice { epsilon: slice.epsilon, time_step: slice.time_step + 1, domain: next, heights })
}

/// Bytes needed to evolve a box of half-width `radius` (two live slices).
pub fn light_cone_bytes(dimension: usize, radius: usize) -> u128 {
    let side = 2 * radius as u128 + 1;
    side.pow(dimension as u32) * 8 * 2
}

pub fn check_memory(dimension: usize, radius: usize, cap: u128) -> Result<()> {
    let required = light_cone_bytes(dimension, radius);
    if required > cap {
        return Err(Error::MemoryCapExceeded { required, cap });
    }
    Ok(())
}

/// Evolve `steps` times from `g_ε` on `domain`, calling `visit(prev, next)`
/// after every step. Returns the final slice.
pub fn evolve_with<F>(g: &InitialData, spec: &DrivingSpec, epsilon: f64, domain: &LatticeBox, steps: usize, mut visit: F) -> Result<SurfaceSlice>
where
    F: FnMut(&SurfaceSlice, &SurfaceSlice) -> Result<()>,
{
    let mut slice = init_surface(g, epsilon, domain)?;
    for _ in 0..steps {
        let next = evolve_step(&slice, spec)?;
        visit(&slice, &next)?;
        slice = next;
    }
    Ok(slice)
}

/// How a real point is mapped to a lattice site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ParityRule {
    /// `⌊x/ε⌋` componentwise.
    #[default]
    Floor,
    /// Site whose coordinate-sum parity matches `t_ε`.
    Parity0,
    /// Site whose coordinate-sum parity differs from `t_ε`.
    Parity1,
}

/// `[a]^0 = 2⌊a/2⌋`, always even.
fn even_floor(a: f64) -> i64 {
    2 * guarded_floor(a / 2.0)
}

/// `t_ε = ⌊t/ε²⌋`.
pub fn rescaled_time(epsilon: f64, t: f64) -> usize {
    guarded_floor(t / (epsilon * epsilon)).max(0) as usize
}

/// The lattice site used for `x` at `t_ε` steps under `rule`.
pub fn rescaled_site(epsilon: f64, x: &[f64], t_steps: usize, rule: ParityRule) -> Vec<i64> {
    let scaled: Vec<f64> = x.iter().map(|xi| xi / epsilon).collect();
    let mut site: Vec<i64> = scaled.iter().map(|&s| guarded_floor(s)).collect();
    if rule == ParityRule::Floor {
        return site;
    }
    // Choose [x]^0 (even total) or [x]^1 (odd total) via the first coordinate.
    let want_even = (t_steps % 2 == 0) == (rule == ParityRule::Parity0);
    let rest: i64 = site[1..].iter().sum();
    let first0 = even_floor(scaled[0]);
    let first = if (rest.rem_euclid(2) == 0) == want_even { first0 } else { first0 + 1 };
    site[0] = first;
    site
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledValue {
    /// `f_ε(t_ε, x_ε) - t_ε φ(0)`
    pub value: f64,
    pub t_steps: usize,
    pub site: Vec<i64>,
    /// Parity rules only matter when `α = 0`; set when used with `α ≠ 0`.
    pub parity_flagged: bool,
}

fn numeric_alpha(spec: &DrivingSpec) -> Result<f64> {
    let h = 1e-4;
    let mut u = vec![0.0; spec.stencil_len()];
    u[CENTER] = h;
    let up = spec.eval_slice(&u)?;
    u[CENTER] = -h;
    let down = spec.eval_slice(&u)?;
    Ok((up - down) / (2.0 * h))
}

/// `f^(ε)(t, x) = f_ε(t_ε, x_ε) - t_ε φ(0)` by exact light-cone evolution.
pub fn evaluate_rescaled(
    g: &InitialData,
    spec: &DrivingSpec,
    epsilon: f64,
    t: f64,
    x: &[f64],
    rule: ParityRule,
    memory_cap: u128,
) -> Result<RescaledValue> {
    check_epsilon(epsilon)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("time must be finite and nonnegative, got {t}")));
    }
    if x.len() != spec.dimension() || g.dimension != spec.dimension() {
        return Err(Error::DimensionMismatch { expected: spec.dimension(), found: x.len() });
    }
    let t_steps = rescaled_time(epsilon, t);
    let site = rescaled_site(epsilon, x, t_steps, rule);
    check_memory(spec.dimension(), t_steps, memory_cap)?;
    let parity_flagged = rule != ParityRule::Floor && numeric_alpha(spec)?.abs() > 1e-8;

    let domain = LatticeBox::around(&site, t_steps as i64)?;
    let last = evolve_with(g, spec, epsilon, &domain, t_steps, |_, _| Ok(()))?;
    let raw = last.height(&site).expect("light cone ends on the target site");
    Ok(RescaledValue { value: raw - t_steps as f64 * spec.phi0()?, t_steps, site, parity_flagged })
}

/// `h_ε(t, x)` on a box, for the surface renormalized by `t φ(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HField {
    pub epsilon: f64,
    pub time_step: usize,
    pub domain: LatticeBox,
    pub values: Vec<f64>,
}

impl HField {
    pub fn value(&self, site: &[i64]) -> Option<f64> {
        self.domain.index(site).map(|i| self.values[i])
    }

    /// `h^(ε) = ε^{-2} h_ε`.
    pub fn rescaled(&self, site: &[i64]) -> Option<f64> {
        self.value(site).map(|v| v / (self.epsilon * self.epsilon))
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `h_ε(t,x) = f̃(t,x) - α f̃(t-1,x) - β Σ_b f̃(t-1,x+b)` with
/// `f̃(t, ·) = f_ε(t, ·) - t φ(0)`.
pub fn compute_h_field(prev: &SurfaceSlice, next: &SurfaceSlice, cs: &CoefficientSet) -> Result<HField> {
    if next.time_step != prev.time_step + 1 {
        return Err(Error::SliceMismatch(format!("time steps {} -> {} are not consecutive", prev.time_step, next.time_step)));
    }
    if next.epsilon != prev.epsilon {
        return Err(Error::SliceMismatch("slices carry different epsilon".into()));
    }
    if !prev.domain.contains_box(&next.domain, 1) {
        return Err(Error::SliceMismatch("next domain is not inside the interior of the previous one".into()));
    }
    let t = next.time_step as f64;
    let shift_next = t * cs.phi0;
    let shift_prev = (t - 1.0) * cs.phi0;
    let strides = prev.domain.strides();
    let values = (0..next.domain.len())
        .map(|i| {
            let site = next.domain.site(i);
            let j = prev.domain.index(&site).expect("checked containment");
            let nb: f64 = strides.iter().map(|st| (prev.heights[j + st] - shift_prev) + (prev.heights[j - st] - shift_prev)).sum();
            (next.heights[i] - shift_next) - cs.alpha * (prev.heights[j] - shift_prev) - cs.beta * nb
        })
        .collect();
    Ok(HField { epsilon: next.epsilon, time_step: next.time_step, domain: next.domain.clone(), values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSecondDifference {
    pub axis: usize,
    pub max_abs: f64,
    pub site: Option<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughnessReport {
    pub max_increment: f64,
    pub increment_site: Option<Vec<i64>>,
    pub increment_axis: Option<usize>,
    pub second_differences: Vec<AxisSecondDifference>,
}

/// Largest nearest-neighbor increment and largest second central
/// difference per axis, with the sites where they occur.
pub fn roughness_report(slice: &SurfaceSlice) -> RoughnessReport {
    let dom = &slice.domain;
    let d = dom.dimension();
    let strides = dom.strides();
    let h = &slice.heights;
    let mut report = RoughnessReport {
        max_increment: 0.0,
        increment_site: None,
        increment_axis: None,
        second_differences: (0..d).map(|axis| AxisSecondDifference { axis, max_abs: 0.0, site: None }).collect(),
    };
    for i in 0..h.len() {
        let site = dom.site(i);
        for axis in 0..d {
            let pos = site[axis] - dom.lo()[axis];
            let ext = dom.extent(axis) as i64;
            if pos + 1 < ext {
                let inc = (h[i + strides[axis]] - h[i]).abs();
                if inc > report.max_increment || report.increment_site.is_none() {
                    report.max_increment = inc;
                    report.increment_site = Some(site.clone());
                    report.increment_axis = Some(axis);
                }
            }
            if pos >= 1 && pos + 1 < ext {
                let sd = (h[i + strides[axis]] - 2.0 * h[i] + h[i - strides[axis]]).abs();
                let entry = &mut report.second_differences[axis];
                if sd > entry.max_abs || entry.site.is_none() {
                    entry.max_abs = sd;
                    entry.site = Some(site.clone());
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{extract_coefficients, DEFAULT_FD_STEPS};
    use crate::driving::{DrivingKind, QVariant};

    fn linear(a: f64) -> InitialData {
        InitialData::new(InitialProfile::Linear { slope: vec![a] }, 1).unwrap()
    }

    fn cosine(d: usize) -> InitialData {
        InitialData::new(InitialProfile::Cosine { amplitude: 1.0, wavevector: vec![1.0; d] }, d).unwrap()
    }

    fn sine(d: usize) -> DrivingSpec {
        DrivingSpec::new(DrivingKind::GradientForm { variant: QVariant::Sine, scale: 1.0 }, d).unwrap()
    }

    fn slice_1d(values: &[f64]) -> SurfaceSlice {
        let n = values.len() as i64;
        SurfaceSlice { epsilon: 0.1, time_step: 0, domain: LatticeBox::new(vec![0], vec![n - 1]).unwrap(), heights: values.to_vec() }
    }

    #[test]
    fn init_examples() {
        let b = LatticeBox::new(vec![0], vec![30]).unwrap();
        let s = init_surface(&linear(1.0), 0.1, &b).unwrap();
        assert!((s.height(&[7]).unwrap() - 0.7).abs() < 1e-15);
        let s = init_surface(&cosine(1), 0.1, &b).unwrap();
        assert_eq!(s.height(&[0]).unwrap(), 1.0);
        let capped = InitialData::new(InitialProfile::CappedAbs { cap: 1.0 }, 1).unwrap();
        let s = init_surface(&capped, 0.1, &b).unwrap();
        assert_eq!(s.height(&[25]).unwrap(), 1.0);
        assert!(init_surface(&linear(1.0), 1.5, &b).is_err());
        assert!(matches!(LatticeBox::new(vec![2], vec![1]), Err(Error::EmptyDomain)));
    }

    #[test]
    fn lipschitz_constants() {
        let g = InitialData::new(InitialProfile::Cosine { amplitude: 2.0, wavevector: vec![1.0, -0.5] }, 2).unwrap();
        assert_eq!(g.lipschitz, 3.0);
        assert!(InitialData::with_lipschitz(InitialProfile::Linear { slope: vec![1.0] }, 1, 0.5).is_err());
        assert!(InitialData::new(InitialProfile::Linear { slope: vec![1.0] }, 2).is_err());
    }

    #[test]
    fn step_examples() {
        let bump = slice_1d(&[0.0, 0.0, 1.0, 0.0, 0.0]);
        let avg = evolve_step(&bump, &DrivingSpec::new(DrivingKind::Average, 1).unwrap()).unwrap();
        assert_eq!(avg.heights, vec![0.5, 0.0, 0.5]);
        assert_eq!(avg.domain, LatticeBox::new(vec![1], vec![3]).unwrap());
        assert_eq!(avg.time_step, 1);
        let lpp = evolve_step(&bump, &DrivingSpec::new(DrivingKind::LppMax, 1).unwrap()).unwrap();
        assert_eq!(lpp.heights, vec![1.0, 1.0, 1.0]);
        let id = evolve_step(&bump, &DrivingSpec::new(DrivingKind::Identity, 1).unwrap()).unwrap();
        assert_eq!(id.heights, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn step_exhausts_domain() {
        let tiny = slice_1d(&[0.0, 1.0]);
        assert!(matches!(evolve_step(&tiny, &sine(1)), Err(Error::DomainExhausted { time_step: 0 })));
    }

    #[test]
    fn two_dimensional_step_matches_pointwise() {
        let g = cosine(2);
        let spec = DrivingSpec::new(DrivingKind::LogSumExp { theta: 1.3 }, 2).unwrap();
        let b = LatticeBox::around(&[3, -2], 4).unwrap();
        let s0 = init_surface(&g, 0.2, &b).unwrap();
        let s1 = evolve_step(&s0, &spec).unwrap();
        for site in s1.domain.sites() {
            let at = |dx: i64, dy: i64| s0.height(&[site[0] + dx, site[1] + dy]).unwrap();
            let u = [at(0, 0), at(1, 0), at(-1, 0), at(0, 1), at(0, -1)];
            assert_eq!(s1.height(&site).unwrap(), spec.eval_slice(&u).unwrap());
        }
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let g = cosine(2);
        let spec = sine(2);
        let big = init_surface(&g, 0.05, &LatticeBox::around(&[0, 0], 80).unwrap()).unwrap();
        let par = evolve_step(&big, &spec).unwrap();
        // serial reference
        for (i, h) in par.heights.iter().enumerate().step_by(97) {
            let site = par.domain.site(i);
            let at = |dx: i64, dy: i64| big.height(&[site[0] + dx, site[1] + dy]).unwrap();
            let u = [at(0, 0), at(1, 0), at(-1, 0), at(0, 1), at(0, -1)];
            assert_eq!(h.to_bits(), spec.eval_slice(&u).unwrap().to_bits());
        }
    }

    #[test]
    fn frozen_branch_reproduces_initial_data() {
        let g = cosine(1);
        let id = DrivingSpec::new(DrivingKind::Identity, 1).unwrap();
        for &(eps, t, x) in &[(0.1, 1.0, 0.37), (0.05, 0.3, -1.23), (0.2, 2.0, 0.0)] {
            let r = evaluate_rescaled(&g, &id, eps, t, &[x], ParityRule::Floor, DEFAULT_MEMORY_CAP).unwrap();
            let site = guarded_floor(x / eps) as f64;
            assert_eq!(r.value, g.value(&[eps * site]));
        }
    }

    #[test]
    fn linear_data_scalar_recursion() {
        // f = εx + t_ε (1 - cos ε)/4 at rescaled time 1.
        let r = evaluate_rescaled(&linear(1.0), &sine(1), 0.1, 1.0, &[0.0], ParityRule::Floor, DEFAULT_MEMORY_CAP).unwrap();
        let mut c = 0.0;
        for _ in 0..100 {
            c += (1.0 - 0.1_f64.cos()) / 4.0;
        }
        assert_eq!(r.t_steps, 100);
        assert!((r.value - c).abs() < 1e-12);
        assert!((r.value - 0.124_895_8).abs() < 1e-7);
    }

    #[test]
    fn averaging_cosine_eigenfunction() {
        let avg = DrivingSpec::new(DrivingKind::Average, 1).unwrap();
        let r = evaluate_rescaled(&cosine(1), &avg, 0.1, 1.0, &[0.0], ParityRule::Parity0, DEFAULT_MEMORY_CAP).unwrap();
        assert_eq!(r.site, vec![0]);
        assert!(!r.parity_flagged);
        assert!((r.value - 0.1_f64.cos().powi(100)).abs() < 1e-12);
        assert!((r.value - 0.606_024_08).abs() < 1e-8);
    }

    #[test]
    fn parity_sites() {
        // t even: parity0 -> even site, parity1 -> odd site.
        assert_eq!(rescaled_site(0.1, &[0.35], 100, ParityRule::Parity0), vec![2]);
        assert_eq!(rescaled_site(0.1, &[0.35], 100, ParityRule::Parity1), vec![3]);
        assert_eq!(rescaled_site(0.1, &[0.35], 101, ParityRule::Parity0), vec![3]);
        assert_eq!(rescaled_site(0.1, &[0.25, 0.1], 4, ParityRule::Parity0), vec![3, 1]);
        assert_eq!(rescaled_site(0.1, &[-0.05], 2, ParityRule::Parity0), vec![-2]);
        let flagged = evaluate_rescaled(&cosine(1), &sine(1), 0.2, 1.0, &[0.0], ParityRule::Parity1, DEFAULT_MEMORY_CAP).unwrap();
        assert!(flagged.parity_flagged);
    }

    #[test]
    fn memory_cap_enforced() {
        let r = evaluate_rescaled(&cosine(2), &sine(2), 0.01, 1.0, &[0.0, 0.0], ParityRule::Floor, 1 << 20);
        assert!(matches!(r, Err(Error::MemoryCapExceeded { .. })));
    }

    #[test]
    fn h_field_examples() {
        let g = linear(1.0);
        let b = LatticeBox::around(&[0], 20).unwrap();
        let spec = sine(1);
        let cs = extract_coefficients(&spec, &DEFAULT_FD_STEPS).unwrap();
        let s0 = init_surface(&g, 0.1, &b).unwrap();
        let s1 = evolve_step(&s0, &spec).unwrap();
        let h = compute_h_field(&s0, &s1, &cs).unwrap();
        let expected = (1.0 - 0.1_f64.cos()) / 4.0;
        for v in &h.values {
            assert!((v - expected).abs() < 1e-11);
        }
        assert!((h.rescaled(&[0]).unwrap() - 0.124_896).abs() < 1e-6);

        let g = cosine(1);
        for kind in [DrivingKind::Average, DrivingKind::Identity] {
            let spec = DrivingSpec::new(kind, 1).unwrap();
            let cs = extract_coefficients(&spec, &DEFAULT_FD_STEPS).unwrap();
            let s0 = init_surface(&g, 0.1, &b).unwrap();
            let s1 = evolve_step(&s0, &spec).unwrap();
            assert!(compute_h_field(&s0, &s1, &cs).unwrap().sup_abs() < 1e-13);
        }
        let s0 = init_surface(&g, 0.1, &b).unwrap();
        assert!(matches!(compute_h_field(&s0, &s0, &cs), Err(Error::SliceMismatch(_))));
    }

    #[test]
    fn roughness_examples() {
        let b = LatticeBox::around(&[0], 30).unwrap();
        let s = evolve_with(&linear(0.7), &sine(1), 0.1, &b, 10, |_, _| Ok(())).unwrap();
        let r = roughness_report(&s);
        assert!((r.max_increment - 0.07).abs() < 1e-12);
        assert!(r.second_differences[0].max_abs < 1e-12);

        let lse = DrivingSpec::new(DrivingKind::LogSumExp { theta: 1.0 }, 1).unwrap();
        let b = LatticeBox::around(&[0], 130).unwrap();
        let s = evolve_with(&cosine(1), &lse, 0.1, &b, 100, |_, next| {
            assert!(roughness_report(next).max_increment <= 0.1 + 1e-12);
            Ok(())
        })
        .unwrap();
        assert!(roughness_report(&s).max_increment <= 0.1 + 1e-12);
    }

    #[test]
    fn renormalization_equivalence() {
        // Evolving φ - φ(0) equals evolving φ and subtracting t φ(0).
        let lse = DrivingSpec::new(DrivingKind::LogSumExp { theta: 1.0 }, 1).unwrap();
        let phi0 = lse.phi0().unwrap();
        let b = LatticeBox::around(&[0], 60).unwrap();
        let g = cosine(1);
        let raw = evolve_with(&g, &lse, 0.1, &b, 50, |_, _| Ok(())).unwrap();
        let mut s = init_surface(&g, 0.1, &b).unwrap();
        for _ in 0..50 {
            let mut next = evolve_step(&s, &lse).unwrap();
            next.heights.iter_mut().for_each(|h| *h -= phi0);
            s = next;
        }
        for (a, b) in raw.heights.iter().zip(&s.heights) {
            assert!((a - 50.0 * phi0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_dump() {
        let s = slice_1d(&[1.0, 2.5]);
        assert_eq!(s.to_csv(), "x1,height\n0,1\n1,2.5\n");
    }
}
