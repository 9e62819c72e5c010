//! Experiment configs, ε-sweeps against the continuum limit and report
//! emission.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{check_coefficient_consistency, extract_coefficients, Branch, CoefficientSet, DEFAULT_FD_STEPS};
use crate::driving::{validate_properties, DrivingKind, DrivingSpec};
use crate::error::{Error, Result};
use crate::lattice::{
    compute_h_field, evaluate_rescaled, evolve_step, init_surface, rescaled_site, rescaled_time, InitialData, InitialProfile, LatticeBox,
    ParityRule, DEFAULT_MEMORY_CAP,
};
use crate::limit::{LimitEvaluator, QuadratureConfig};
use crate::numerics::{fit_loglog, LineFit};

pub const DEFAULT_SEED: u64 = 0x6b70_7a5f_6c61_62;
pub const DEFAULT_VALIDATION_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    #[serde(flatten)]
    pub profile: InitialProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub driving: DrivingKind,
    pub initial: InitialConfig,
    pub epsilons: Vec<f64>,
    pub eval_points: Vec<EvalPoint>,
    /// Recognized keys: `axiom`, `consistency`, `quadrature`.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub parity_rule: ParityRule,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    pub fn validate(&self) -> Result<()> {
        crate::driving::check_dimension(self.dimension)?;
        if self.epsilons.is_empty() {
            return Err(Error::InvalidParameter("epsilons must not be empty".into()));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) || self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("epsilons must be strictly decreasing in (0, 1)".into()));
        }
        for p in &self.eval_points {
            if p.x.len() != self.dimension {
                return Err(Error::DimensionMismatch { expected: self.dimension, found: p.x.len() });
            }
            if !(p.t > 0.0 && p.t.is_finite()) || p.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("evaluation point ({}, {:?}) needs finite t > 0", p.t, p.x)));
            }
            if rescaled_time(self.epsilons[0], p.t) < 1 {
                return Err(Error::InvalidParameter(format!("t = {} gives zero lattice steps at epsilon {}", p.t, self.epsilons[0])));
            }
        }
        Ok(())
    }

    pub fn driving_spec(&self) -> Result<DrivingSpec> {
        DrivingSpec::new(self.driving.clone(), self.dimension)
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        let profile = self.initial.profile.clone();
        match self.initial.lipschitz {
            Some(l) => InitialData::with_lipschitz(profile, self.dimension, l),
            None => InitialData::new(profile, self.dimension),
        }
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        QuadratureConfig { tol: self.tolerance("quadrature", 1e-10), ..QuadratureConfig::default() }
    }
}

/// Everything a sweep needs once the driver has been validated.
pub struct PreparedExperiment {
    pub spec: DrivingSpec,
    pub initial: InitialData,
    pub coefficients: CoefficientSet,
    pub limit: LimitEvaluator,
}

/// Axiom validation, coefficient extraction and consistency checks.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedExperiment> {
    config.validate()?;
    let spec = config.driving_spec()?;
    let initial = config.initial_data()?;
    let report = validate_properties(&spec, DEFAULT_VALIDATION_SAMPLES, config.tolerance("axiom", 1e-9), config.seed)?;
    if !report.passed() {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{:?} (worst violation {:e})", c.axiom, c.worst_violation))
            .collect();
        return Err(Error::ValidationFailed(format!("{}: {}", spec.name(), failed.join(", "))));
    }
    let coefficients = extract_coefficients(&spec, &DEFAULT_FD_STEPS)?;
    let consistency = check_coefficient_consistency(&coefficients, config.dimension, config.tolerance("consistency", 1e-6));
    if !consistency.passed() {
        let failed: Vec<&str> = consistency.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(Error::InconsistentCoefficients(failed.join(", ")));
    }
    let limit = LimitEvaluator::from_coefficients(initial.clone(), &coefficients, config.quadrature())?;
    Ok(PreparedExperiment { spec, initial, coefficients, limit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub t: f64,
    pub x: Vec<f64>,
    pub t_steps: usize,
    pub site: Vec<i64>,
    pub f_eps: f64,
    pub f_limit: f64,
    pub abs_err: f64,
    pub parity_flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub t: f64,
    pub x: Vec<f64>,
    pub f_limit: f64,
    pub errors: Vec<f64>,
    /// Slope of `log err` against `log ε`.
    pub fitted_order: Option<LineFit>,
    /// Non-increasing after the first entry.
    pub monotone: bool,
    pub strictly_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: ExperimentConfig,
    pub coefficients: CoefficientSet,
    pub branch: Branch,
    pub rows: Vec<ConvergenceRow>,
    pub points: Vec<PointSummary>,
    pub metadata: RunMetadata,
}

fn summarize(t: f64, x: &[f64], f_limit: f64, epsilons: &[f64], errors: Vec<f64>) -> PointSummary {
    let fitted_order = fit_loglog(epsilons, &errors);
    let monotone = errors.len() < 3 || errors[1..].windows(2).all(|w| w[1] <= w[0]);
    let strictly_decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    PointSummary { t, x: x.to_vec(), f_limit, errors, fitted_order, monotone, strictly_decreasing }
}

/// Compare `f^(ε)(t,x)` with the continuum limit for every ε and point.
pub fn run_convergence_sweep(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let prep = prepare(config)?;
    sweep_prepared(config, &prep, config.parity_rule)
}

fn sweep_prepared(config: &ExperimentConfig, prep: &PreparedExperiment, rule: ParityRule) -> Result<ConvergenceReport> {
    let limits: Vec<f64> = config.eval_points.iter().map(|p| prep.limit.cole_hopf_eval(p.t, &p.x)).collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> =
        (0..config.epsilons.len()).flat_map(|i| (0..config.eval_points.len()).map(move |j| (i, j))).collect();
    let rows: Vec<ConvergenceRow> = cells
        .par_iter()
        .map(|&(i, j)| {
            let eps = config.epsilons[i];
            let p = &config.eval_points[j];
            let r = evaluate_rescaled(&prep.initial, &prep.spec, eps, p.t, &p.x, rule, DEFAULT_MEMORY_CAP)?;
            Ok(ConvergenceRow {
                epsilon: eps,
                t: p.t,
                x: p.x.clone(),
                t_steps: r.t_steps,
                site: r.site,
                f_eps: r.value,
                f_limit: limits[j],
                abs_err: (r.value - limits[j]).abs(),
                parity_flagged: r.parity_flagged,
            })
        })
        .collect::<Result<_>>()?;
    let n_points = config.eval_points.len();
    let points = config
        .eval_points
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let errors = (0..config.epsilons.len()).map(|i| rows[i * n_points + j].abs_err).collect();
            summarize(p.t, &p.x, limits[j], &config.epsilons, errors)
        })
        .collect();
    let mut config = config.clone();
    config.parity_rule = rule;
    Ok(ConvergenceReport {
        metadata: RunMetadata { seed: config.seed, version: env!("CARGO_PKG_VERSION").into() },
        config,
        coefficients: prep.coefficients.clone(),
        branch: prep.limit.branch,
        rows,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSquareRow {
    pub epsilon: f64,
    pub t: f64,
    pub x: Vec<f64>,
    pub t_steps: usize,
    /// `ε^{-2} h_ε(t_ε, x_ε)`
    pub h_rescaled: f64,
    /// `γ |∇f(t, x)|²`
    pub target: f64,
    pub abs_err: f64,
    /// Omitted when the target vanishes.
    pub rel_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSquareReport {
    pub coefficients: CoefficientSet,
    pub branch: Branch,
    pub rows: Vec<GradientSquareRow>,
    /// Per point: absolute errors strictly decrease with ε.
    pub decreasing: Vec<bool>,
}

/// `ε^{-2} h_ε(t_ε, x_ε)` by light-cone evolution.
pub fn rescaled_h(
    g: &InitialData,
    spec: &DrivingSpec,
    cs: &CoefficientSet,
    epsilon: f64,
    t: f64,
    x: &[f64],
    rule: ParityRule,
) -> Result<(usize, f64)> {
    let t_steps = rescaled_time(epsilon, t);
    if t_steps == 0 {
        return Err(Error::InvalidParameter(format!("t = {t} gives zero lattice steps at epsilon {epsilon}")));
    }
    let site = rescaled_site(epsilon, x, t_steps, rule);
    crate::lattice::check_memory(spec.dimension(), t_steps, DEFAULT_MEMORY_CAP)?;
    let mut slice = init_surface(g, epsilon, &LatticeBox::around(&site, t_steps as i64)?)?;
    for _ in 1..t_steps {
        slice = evolve_step(&slice, spec)?;
    }
    let last = evolve_step(&slice, spec)?;
    let h = compute_h_field(&slice, &last, cs)?;
    Ok((t_steps, h.rescaled(&site).expect("final site is in the h field")))
}

/// Compare `h^(ε)(t,x)` with `γ|∇f(t,x)|²` for every ε and point.
pub fn run_gradient_square_check(config: &ExperimentConfig) -> Result<GradientSquareReport> {
    let prep = prepare(config)?;
    if prep.limit.branch == Branch::Frozen {
        return Err(Error::InvalidParameter("gradient-square check needs the kpz or heat branch".into()));
    }
    let cs = &prep.coefficients;
    let gamma = if prep.limit.branch == Branch::Heat { 0.0 } else { cs.gamma };
    let targets: Vec<f64> = config
        .eval_points
        .iter()
        .map(|p| Ok(gamma * prep.limit.limit_gradient(p.t, &p.x)?.norm.powi(2)))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> =
        (0..config.epsilons.len()).flat_map(|i| (0..config.eval_points.len()).map(move |j| (i, j))).collect();
    let rows: Vec<GradientSquareRow> = cells
        .par_iter()
        .map(|&(i, j)| {
            let eps = config.epsilons[i];
            let p = &config.eval_points[j];
            let (t_steps, h) = rescaled_h(&prep.initial, &prep.spec, cs, eps, p.t, &p.x, config.parity_rule)?;
            let target = targets[j];
            let abs_err = (h - target).abs();
            let rel_err = (target.abs() > 1e-12).then(|| abs_err / target.abs());
            Ok(GradientSquareRow { epsilon: eps, t: p.t, x: p.x.clone(), t_steps, h_rescaled: h, target, abs_err, rel_err })
        })
        .collect::<Result<_>>()?;
    let n = config.eval_points.len();
    let decreasing = (0..n)
        .map(|j| {
            let errs: Vec<f64> = (0..config.epsilons.len()).map(|i| rows[i * n + j].abs_err).collect();
            errs.windows(2).all(|w| w[1] < w[0])
        })
        .collect();
    Ok(GradientSquareReport { coefficients: cs.clone(), branch: prep.limit.branch, rows, decreasing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityRow {
    pub epsilon: f64,
    pub t: f64,
    pub x: Vec<f64>,
    pub f_parity0: f64,
    pub f_parity1: f64,
    pub difference: f64,
    /// `2Lε`
    pub bound: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub parity0: ConvergenceReport,
    pub parity1: ConvergenceReport,
    pub rows: Vec<ParityRow>,
}

/// Run the sweep under both parity rules and compare them cell by cell.
pub fn run_parity_check(config: &ExperimentConfig) -> Result<ParityReport> {
    let prep = prepare(config)?;
    let parity0 = sweep_prepared(config, &prep, ParityRule::Parity0)?;
    let parity1 = sweep_prepared(config, &prep, ParityRule::Parity1)?;
    let lip = prep.initial.lipschitz;
    let rows = parity0
        .rows
        .iter()
        .zip(&parity1.rows)
        .map(|(a, b)| {
            let difference = (a.f_eps - b.f_eps).abs();
            let bound = 2.0 * lip * a.epsilon;
            ParityRow {
                epsilon: a.epsilon,
                t: a.t,
                x: a.x.clone(),
                f_parity0: a.f_eps,
                f_parity1: b.f_eps,
                difference,
                bound,
                within_bound: difference <= bound + 1e-12,
            }
        })
        .collect();
    Ok(ParityReport { parity0, parity1, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HScalingRow {
    pub epsilon: f64,
    pub t_steps: usize,
    pub sup_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HScalingReport {
    pub rows: Vec<HScalingRow>,
    /// Slope of `log sup|h_ε|` against `log ε`.
    pub fit: Option<LineFit>,
}

/// `sup |h_ε|` over the light cone of `(t, 0)` for each ε.
pub fn h_scaling(g: &InitialData, spec: &DrivingSpec, epsilons: &[f64], t: f64) -> Result<HScalingReport> {
    let cs = extract_coefficients(spec, &DEFAULT_FD_STEPS)?;
    let origin = vec![0_i64; spec.dimension()];
    let rows: Vec<HScalingRow> = epsilons
        .par_iter()
        .map(|&eps| {
            let t_steps = rescaled_time(eps, t);
            crate::lattice::check_memory(spec.dimension(), t_steps, DEFAULT_MEMORY_CAP)?;
            let mut sup_h = 0.0_f64;
            crate::lattice::evolve_with(g, spec, eps, &LatticeBox::around(&origin, t_steps as i64)?, t_steps, |prev, next| {
                sup_h = sup_h.max(compute_h_field(prev, next, &cs)?.sup_abs());
                Ok(())
            })?;
            Ok(HScalingRow { epsilon: eps, t_steps, sup_h })
        })
        .collect::<Result<_>>()?;
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let sups: Vec<f64> = rows.iter().map(|r| r.sup_h).collect();
    Ok(HScalingReport { fit: fit_loglog(&eps, &sups), rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidParameter(format!("unknown report format {other:?}"))),
        }
    }
}

impl ReportFormat {
    /// `json` for `.json` paths, `csv` otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let d = self.config.dimension;
        let mut out = String::from("epsilon,t,");
        for i in 1..=d {
            out.push_str(&format!("x{i},"));
        }
        out.push_str("f_eps,f_limit,abs_err,fitted_order\n");
        let n = self.points.len();
        for (k, r) in self.rows.iter().enumerate() {
            let order = self.points[k % n].fitted_order.map_or_else(|| "nan".to_string(), |f| f.slope.to_string());
            out.push_str(&format!("{},{},", r.epsilon, r.t));
            for xi in &r.x {
                out.push_str(&format!("{xi},"));
            }
            out.push_str(&format!("{},{},{},{}\n", r.f_eps, r.f_limit, r.abs_err, order));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn emit_report(report: &ConvergenceReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json()?,
    };
    std::fs::write(path, text)?;
    Ok(())
}
