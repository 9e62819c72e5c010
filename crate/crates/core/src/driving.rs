//! Driving functions: the local update rule `f(t+1, x) = φ((f(t, x+a))_{a∈A})`.
//!
//! A neighborhood vector is indexed by the stencil `A = {0, ±e_1, …, ±e_d}`
//! laid out as `[0, +e_1, -e_1, +e_2, -e_2, …]`. The catalog covers the
//! explicitly solvable drivers (averaging, log-sum-exp), the gradient-form
//! family, the Lipschitz-only max rules and their Gaussian smoothings, and
//! the conditional-mean update of a gradient Gibbs measure.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{adaptive_simpson, normal_cdf, GaussHermite};

pub const MAX_DIMENSION: usize = 3;

/// Index of the center site in a neighborhood vector.
pub const CENTER: usize = 0;

/// Index of `+e_axis`.
#[inline]
pub const fn plus(axis: usize) -> usize {
    1 + 2 * axis
}

/// Index of `-e_axis`.
#[inline]
pub const fn minus(axis: usize) -> usize {
    2 + 2 * axis
}

/// Index of the reflected neighbor (`+e_i <-> -e_i`); the center maps to itself.
#[inline]
pub const fn opposite(index: usize) -> usize {
    if index == CENTER {
        CENTER
    } else if index % 2 == 1 {
        index + 1
    } else {
        index - 1
    }
}

#[inline]
pub const fn stencil_len(dimension: usize) -> usize {
    2 * dimension + 1
}

/// Heights on the stencil `A` around one site.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodVector {
    dimension: usize,
    values: Vec<f64>,
}

impl NeighborhoodVector {
    pub fn new(dimension: usize, values: Vec<f64>) -> Result<Self> {
        check_dimension(dimension)?;
        if values.len() != stencil_len(dimension) {
            return Err(Error::DimensionMismatch { expected: stencil_len(dimension), found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("neighborhood entries must be finite".into()));
        }
        Ok(Self { dimension, values })
    }

    pub fn zeros(dimension: usize) -> Result<Self> {
        Self::new(dimension, vec![0.0; stencil_len(dimension)])
    }

    /// Build from the center value and `(+e_i, -e_i)` pairs.
    pub fn from_parts(center: f64, pairs: &[(f64, f64)]) -> Result<Self> {
        let mut values = vec![center];
        for &(p, m) in pairs {
            values.push(p);
            values.push(m);
        }
        Self::new(pairs.len(), values)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn center(&self) -> f64 {
        self.values[CENTER]
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self { dimension: self.dimension, values: self.values.iter().map(|v| v + c).collect() }
    }
}

pub(crate) fn check_dimension(dimension: usize) -> Result<()> {
    if dimension == 0 || dimension > MAX_DIMENSION {
        return Err(Error::InvalidParameter(format!("dimension must be in 1..={MAX_DIMENSION}, got {dimension}")));
    }
    Ok(())
}

/// Choice of `q` in the gradient-form driver `φ(u) = u_0 + (1/2d) Σ_b q(u_b - u_0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QVariant {
    /// `q(v) = (v + 1 - cos v)/4`, positive curvature.
    Sine,
    /// `q(v) = (v + cos v - 1)/4`, negative curvature.
    SineNeg,
}

impl QVariant {
    fn q(self, v: f64) -> f64 {
        match self {
            QVariant::Sine => (v + 1.0 - v.cos()) / 4.0,
            QVariant::SineNeg => (v + v.cos() - 1.0) / 4.0,
        }
    }

    /// Supremum of `q'` over the real line.
    fn max_slope(self) -> f64 {
        0.5
    }
}

/// Lipschitz rule that a smoothed driver convolves with a Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothBase {
    LppMax,
    RsosMaxmin,
}

/// Even convex potential of a gradient Gibbs measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Potential {
    /// `V(x) = x^2 / 2`
    Quadratic,
    /// `V(x) = x^2 / 2 + λ x^4`
    Quartic { lambda: f64 },
}

impl Potential {
    #[inline]
    fn value(self, x: f64) -> f64 {
        match self {
            Potential::Quadratic => 0.5 * x * x,
            Potential::Quartic { lambda } => {
                let x2 = x * x;
                0.5 * x2 + lambda * x2 * x2
            }
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

pub const DEFAULT_SMOOTHING_ORDER: usize = 64;

fn default_order() -> usize {
    DEFAULT_SMOOTHING_ORDER
}

/// The driver catalog, serialized as `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum DrivingKind {
    /// `(1/2d) Σ_b u_b`
    Average,
    /// `(1/θ) log Σ_b e^{θ u_b}`
    #[serde(rename = "logsumexp")]
    LogSumExp { theta: f64 },
    /// `u_0 + (κ/2d) Σ_b q(u_b - u_0)`
    GradientForm {
        variant: QVariant,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// `max_{a∈A} u_a`
    LppMax,
    /// `(max_b u_b + min_b u_b)/2`
    RsosMaxmin,
    /// `E[base(u + δZ)]`, `Z` standard Gaussian on `R^A`.
    Smoothed {
        base: SmoothBase,
        delta: f64,
        #[serde(default = "default_order")]
        order: usize,
    },
    /// Conditional mean of the center height given its neighbors.
    Gibbs { potential: Potential },
    /// `u_0`
    Identity,
    /// `u_0 - u_{+e_1}`. Violates the axioms; kept as a validator fixture.
    NonMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    C2,
    LipschitzOnly,
}

pub const GIBBS_REL_TOL: f64 = 1e-10;
const GIBBS_WINDOW_SIGMAS: f64 = 10.0;
const GIBBS_MAX_DEPTH: u32 = 48;

/// A validated driving function for a fixed dimension.
#[derive(Debug, Clone)]
pub struct DrivingSpec {
    dimension: usize,
    kind: DrivingKind,
    hermite: Option<Arc<GaussHermite>>,
}

impl PartialEq for DrivingSpec {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension && self.kind == other.kind
    }
}

impl DrivingSpec {
    pub fn new(kind: DrivingKind, dimension: usize) -> Result<Self> {
        check_dimension(dimension)?;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let mut hermite = None;
        match &kind {
            DrivingKind::LogSumExp { theta } if !(*theta > 0.0 && theta.is_finite()) => {
                return bad(format!("logsumexp needs theta > 0, got {theta}"));
            }
            DrivingKind::GradientForm { variant, scale } => {
                if !(*scale > 0.0 && scale * variant.max_slope() <= 1.0) {
                    return bad(format!("gradient_form scale must lie in (0, 2], got {scale}"));
                }
            }
            DrivingKind::Smoothed { delta, order, .. } => {
                if !(*delta > 0.0 && delta.is_finite()) {
                    return bad(format!("smoothing width must be positive, got {delta}"));
                }
                if *order < 4 {
                    return bad(format!("quadrature order must be at least 4, got {order}"));
                }
                hermite = Some(Arc::new(GaussHermite::new(*order)?));
            }
            DrivingKind::Gibbs { potential: Potential::Quartic { lambda } } if !(*lambda >= 0.0 && lambda.is_finite()) => {
                return bad(format!("quartic potential needs lambda >= 0, got {lambda}"));
            }
            _ => {}
        }
        Ok(Self { dimension, kind, hermite })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> &DrivingKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DrivingKind::Average => "average",
            DrivingKind::LogSumExp { .. } => "logsumexp",
            DrivingKind::GradientForm { .. } => "gradient_form",
            DrivingKind::LppMax => "lpp_max",
            DrivingKind::RsosMaxmin => "rsos_maxmin",
            DrivingKind::Smoothed { .. } => "smoothed",
            DrivingKind::Gibbs { .. } => "gibbs",
            DrivingKind::Identity => "identity",
            DrivingKind::NonMonotone => "non_monotone",
        }
    }

    pub fn claimed_smoothness(&self) -> Smoothness {
        match self.kind {
            DrivingKind::LppMax | DrivingKind::RsosMaxmin => Smoothness::LipschitzOnly,
            _ => Smoothness::C2,
        }
    }

    pub fn stencil_len(&self) -> usize {
        stencil_len(self.dimension)
    }

    /// `φ(u)`.
    pub fn evaluate(&self, u: &NeighborhoodVector) -> Result<f64> {
        if u.dimension() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: u.dimension() });
        }
        self.eval_slice(u.values())
    }

    /// `φ(0)`.
    pub fn phi0(&self) -> Result<f64> {
        self.eval_slice(&vec![0.0; self.stencil_len()])
    }

    /// `φ` on a raw stencil slice of length `2d + 1`.
    pub fn eval_slice(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.stencil_len() {
            return Err(Error::DimensionMismatch { expected: self.stencil_len(), found: u.len() });
        }
        let nb = &u[1..];
        let two_d = nb.len() as f64;
        let value = match self.kind {
            DrivingKind::Average => nb.iter().sum::<f64>() / two_d,
            DrivingKind::LogSumExp { theta } => {
                let m = nb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + nb.iter().map(|v| (theta * (v - m)).exp()).sum::<f64>().ln() / theta
            }
            DrivingKind::GradientForm { variant, scale } => {
                let u0 = u[CENTER];
                u0 + scale * nb.iter().map(|v| variant.q(v - u0)).sum::<f64>() / two_d
            }
            DrivingKind::LppMax => u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            DrivingKind::RsosMaxmin => {
                let (lo, hi) = min_max(nb);
                0.5 * (lo + hi)
            }
            DrivingKind::Smoothed { base, delta, .. } => {
                let gh = self.hermite.as_deref().expect("smoothed spec carries its rule");
                smoothed_value(base, delta, gh, u)
            }
            DrivingKind::Gibbs { potential } => gibbs_value(potential, nb)?,
            DrivingKind::Identity => u[CENTER],
            DrivingKind::NonMonotone => u[CENTER] - u[plus(0)],
        };
        Ok(value)
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// `E[max_a (w_a + δ Z_a)]` for independent standard Gaussians, reduced to a
/// one-dimensional integral over the winning coordinate's noise:
/// `Σ_a E[(w_a + δZ) Π_{a'≠a} Φ((w_a - w_a')/δ + Z)]`.
fn expected_max(w: &[f64], delta: f64, gh: &GaussHermite) -> f64 {
    let mut total = 0.0;
    for (a, &wa) in w.iter().enumerate() {
        total += gh.expect(|z| {
            let mut prob = 1.0;
            for (b, &wb) in w.iter().enumerate() {
                if b != a {
                    prob *= normal_cdf((wa - wb) / delta + z);
                }
            }
            (wa + delta * z) * prob
        });
    }
    total
}

fn smoothed_value(base: SmoothBase, delta: f64, gh: &GaussHermite, u: &[f64]) -> f64 {
    match base {
        SmoothBase::LppMax => {
            let m = u.iter().sum::<f64>() / u.len() as f64;
            let w: Vec<f64> = u.iter().map(|v| v - m).collect();
            m + expected_max(&w, delta, gh)
        }
        SmoothBase::RsosMaxmin => {
            // The center noise integrates out; only the neighbors matter.
            let nb = &u[1..];
            let m = nb.iter().sum::<f64>() / nb.len() as f64;
            let w: Vec<f64> = nb.iter().map(|v| v - m).collect();
            let neg: Vec<f64> = w.iter().map(|v| -v).collect();
            let e_max = expected_max(&w, delta, gh);
            let e_min = -expected_max(&neg, delta, gh);
            m + 0.5 * (e_max + e_min)
        }
    }
}

/// Ratio of `∫ s e^{-E(s)} ds` and `∫ e^{-E(s)} ds` with
/// `E(s) = Σ_b V(u_b - m - s)`, `m` the neighbor mean.
fn gibbs_value(potential: Potential, nb: &[f64]) -> Result<f64> {
    let m = nb.iter().sum::<f64>() / nb.len() as f64;
    let w: Vec<f64> = nb.iter().map(|v| v - m).collect();
    let spread = w.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    // Posterior width from the quadratic part of V (unit curvature per bond).
    let sigma = 1.0 / (nb.len() as f64).sqrt();
    let half = GIBBS_WINDOW_SIGMAS * sigma + spread;
    let energy = |s: f64| w.iter().map(|wb| potential.value(wb - s)).sum::<f64>();

    // Coarse pass: energy floor and a scale for the absolute tolerance.
    const COARSE: usize = 64;
    let h = 2.0 * half / COARSE as f64;
    let coarse: Vec<f64> = (0..=COARSE).map(|i| energy(-half + h * i as f64)).collect();
    let e_min = coarse.iter().copied().fold(f64::INFINITY, f64::min);
    let mass: f64 = coarse.iter().map(|e| (e_min - e).exp()).sum::<f64>() * h;

    let est = adaptive_simpson(
        |s| {
            let weight = (e_min - energy(s)).exp();
            [weight, s * weight]
        },
        -half,
        half,
        GIBBS_REL_TOL * mass,
        GIBBS_MAX_DEPTH,
    );
    if !est.converged {
        return Err(Error::QuadratureNonConvergence { what: "gibbs conditional mean".into(), residual: est.residual / mass });
    }
    Ok(m + est.value[1] / est.value[0])
}

// ---------------------------------------------------------------------------
// Axiom validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    Equivariance,
    Monotonicity,
    LatticeSymmetry,
    Contraction,
}

/// A pair of inputs exhibiting the worst violation of an axiom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub phi_u: f64,
    pub phi_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub axiom: Axiom,
    pub passed: bool,
    /// Largest excess over the axiom's bound (negative when comfortably satisfied).
    pub worst_violation: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub driving: String,
    pub seed: u64,
    pub sample_count: usize,
    pub tol: f64,
    pub checks: Vec<AxiomCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, axiom: Axiom) -> &AxiomCheck {
        self.checks.iter().find(|c| c.axiom == axiom).expect("all axioms are checked")
    }
}

struct Tracker {
    axiom: Axiom,
    tol: f64,
    worst: f64,
    witness: Option<Witness>,
}

impl Tracker {
    fn new(axiom: Axiom, tol: f64) -> Self {
        Self { axiom, tol, worst: f64::NEG_INFINITY, witness: None }
    }

    fn record(&mut self, excess: f64, u: &[f64], v: &[f64], phi_u: f64, phi_v: f64) {
        if excess > self.worst || excess.is_nan() {
            self.worst = excess;
            self.witness = Some(Witness { u: u.to_vec(), v: v.to_vec(), phi_u, phi_v });
        }
    }

    fn finish(self) -> AxiomCheck {
        let passed = self.worst <= self.tol;
        AxiomCheck {
            axiom: self.axiom,
            passed,
            worst_violation: self.worst,
            witness: if passed { None } else { self.witness },
        }
    }
}

pub const DEFAULT_VALIDATION_SEED: u64 = 0x6b70_7a5f_6c61_62;

/// Check the growth axioms on seeded pseudo-random inputs.
///
/// Equivariance `|φ(u+c) - φ(u) - c|`, monotonicity `φ(u) - φ(v)` for
/// `u ≤ v`, invariance under axis swaps and reflections, and the sup-norm
/// contraction `|φ(u) - φ(v)| - max_a |u_a - v_a|` are each compared to `tol`.
pub fn validate_properties(spec: &DrivingSpec, sample_count: usize, tol: f64, seed: u64) -> Result<ValidationReport> {
    if sample_count == 0 {
        return Err(Error::InvalidParameter("sample_count must be at least 1".into()));
    }
    let n = spec.stencil_len();
    let d = spec.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut equi = Tracker::new(Axiom::Equivariance, tol);
    let mut mono = Tracker::new(Axiom::Monotonicity, tol);
    let mut sym = Tracker::new(Axiom::LatticeSymmetry, tol);
    let mut contr = Tracker::new(Axiom::Contraction, tol);

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    for _ in 0..sample_count {
        for x in u.iter_mut() {
            *x = rng.gen_range(-2.0..2.0);
        }
        let phi_u = spec.eval_slice(&u)?;

        let c: f64 = rng.gen_range(-10.0..10.0);
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui + c;
        }
        let phi_v = spec.eval_slice(&v)?;
        equi.record((phi_v - phi_u - c).abs(), &u, &v, phi_u, phi_v);

        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = if rng.gen_bool(0.5) { ui + rng.gen_range(0.0..1.0) } else { *ui };
        }
        let phi_v = spec.eval_slice(&v)?;
        mono.record(phi_u - phi_v, &u, &v, phi_u, phi_v);

        // reflection of one axis
        let axis = rng.gen_range(0..d);
        v.copy_from_slice(&u);
        v.swap(plus(axis), minus(axis));
        let phi_v = spec.eval_slice(&v)?;
        sym.record((phi_v - phi_u).abs(), &u, &v, phi_u, phi_v);
        // swap of two axes
        if d >= 2 {
            let i = rng.gen_range(0..d);
            let j = (i + rng.gen_range(1..d)) % d;
            v.copy_from_slice(&u);
            v.swap(plus(i), plus(j));
            v.swap(minus(i), minus(j));
            let phi_v = spec.eval_slice(&v)?;
            sym.record((phi_v - phi_u).abs(), &u, &v, phi_u, phi_v);
        }

        let near = rng.gen_bool(0.5);
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = if near { ui + rng.gen_range(-0.1..0.1) } else { rng.gen_range(-2.0..2.0) };
        }
        let phi_v = spec.eval_slice(&v)?;
        let sup = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        contr.record((phi_u - phi_v).abs() - sup, &u, &v, phi_u, phi_v);
    }

    Ok(ValidationReport {
        driving: spec.name().to_string(),
        seed,
        sample_count,
        tol,
        checks: vec![equi.finish(), mono.finish(), sym.finish(), contr.finish()],
    })
}

// ---------------------------------------------------------------------------
// Smoothness probe
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessVerdict {
    C2Consistent,
    NonSmoothFlagged,
}

/// Second-difference estimates for one stencil across the probe steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeLine {
    pub label: String,
    pub estimates: Vec<f64>,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub verdict: SmoothnessVerdict,
    pub threshold: f64,
    pub steps: Vec<f64>,
    pub worst_spread: f64,
    pub lines: Vec<ProbeLine>,
}

pub const DEFAULT_PROBE_THRESHOLD: f64 = 0.25;
pub const DEFAULT_PROBE_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];
/// Curvatures below this magnitude are compared in absolute terms. Kinked
/// drivers give estimates of order `1/h`, far above it.
const SPREAD_FLOOR: f64 = 1.0;

/// Fixed generic offset directions. The probe centers its stencils at
/// `h * w`, so stencils shrink onto the origin with the step. A C² driver
/// gives estimates converging to its Hessian at 0; a piecewise-linear one
/// gives `O(1/h)` estimates whenever a kink crosses the stencil, including
/// odd homogeneous rules whose centered differences at 0 cancel exactly.
fn probe_offsets(n: usize) -> Vec<Vec<f64>> {
    let gen = |phase: f64, step: f64| -> Vec<f64> {
        (0..n).map(|k| (((k as f64) * step + phase).fract() - 0.5) * 1.6).collect()
    };
    vec![vec![0.0; n], gen(0.37, 0.618_034), gen(0.11, 0.414_214)]
}

fn probe_pairs(d: usize) -> Vec<(String, usize, Option<usize>)> {
    let mut out = vec![("d00".to_string(), CENTER, None)];
    for i in 0..d {
        out.push((format!("d+{i}+{i}"), plus(i), None));
        out.push((format!("d-{i}-{i}"), minus(i), None));
        out.push((format!("d+{i}-{i}"), plus(i), Some(minus(i))));
        for j in (i + 1)..d {
            out.push((format!("d+{i}+{j}"), plus(i), Some(plus(j))));
            out.push((format!("d+{i}-{j}"), plus(i), Some(minus(j))));
        }
    }
    out
}

/// Flag drivers whose second differences near 0 fail to settle as the
/// step shrinks.
pub fn smoothness_probe(spec: &DrivingSpec, steps: &[f64], threshold: f64) -> Result<SmoothnessReport> {
    if steps.len() < 3 {
        return Err(Error::InvalidParameter("smoothness probe needs at least 3 steps".into()));
    }
    if steps.iter().any(|h| !(*h > 0.0 && h.is_finite())) || steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("probe steps must be positive and strictly decreasing".into()));
    }
    let n = spec.stencil_len();
    let mut lines = Vec::new();
    let mut buf = vec![0.0; n];
    for (k, offset) in probe_offsets(n).iter().enumerate() {
        for (label, p, q) in probe_pairs(spec.dimension()) {
            let mut estimates = Vec::with_capacity(steps.len());
            for &h in steps {
                let mut at = |dp: f64, dq: f64| -> Result<f64> {
                    for (b, o) in buf.iter_mut().zip(offset) {
                        *b = h * o;
                    }
                    buf[p] += dp;
                    if let Some(q) = q {
                        buf[q] += dq;
                    }
                    spec.eval_slice(&buf)
                };
                let est = match q {
                    None => (at(h, 0.0)? - 2.0 * at(0.0, 0.0)? + at(-h, 0.0)?) / (h * h),
                    Some(_) => (at(h, h)? - at(h, -h)? - at(-h, h)? + at(-h, -h)?) / (4.0 * h * h),
                };
                estimates.push(est);
            }
            let lo = estimates.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scale = estimates.iter().fold(SPREAD_FLOOR, |acc, e| acc.max(e.abs()));
            lines.push(ProbeLine { label: format!("{label}@w{k}"), estimates, spread: (hi - lo) / scale });
        }
    }
    let worst_spread = lines.iter().map(|l| l.spread).fold(0.0, f64::max);
    let verdict = if worst_spread > threshold || !worst_spread.is_finite() {
        SmoothnessVerdict::NonSmoothFlagged
    } else {
        SmoothnessVerdict::C2Consistent
    };
    Ok(SmoothnessReport { verdict, threshold, steps: steps.to_vec(), worst_spread, lines })
}
