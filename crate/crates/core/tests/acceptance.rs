//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line regardless of outcome.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use kpz_lab::coeffs::Branch;
use kpz_lab::driving::{
    smoothness_probe, validate_properties, Axiom, DrivingKind, DrivingSpec, Potential, QVariant, SmoothBase, SmoothnessVerdict,
    DEFAULT_PROBE_STEPS, DEFAULT_PROBE_THRESHOLD,
};
use kpz_lab::harness::{
    h_scaling, run_convergence_sweep, run_gradient_square_check, run_parity_check, ExperimentConfig, DEFAULT_SEED,
};
use kpz_lab::lattice::{evaluate_rescaled, evolve_with, roughness_report, InitialData, InitialProfile, LatticeBox, ParityRule, DEFAULT_MEMORY_CAP};
use kpz_lab::limit::{LimitEvaluator, QuadratureConfig};
use kpz_lab::numerics::guarded_floor;
use kpz_lab::rwalk::{clt_error_table, reconstruct_via_representation};

type Outcome = Result<String, String>;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn cosine(d: usize) -> InitialData {
    InitialData::new(InitialProfile::Cosine { amplitude: 1.0, wavevector: vec![1.0; d] }, d).unwrap()
}

fn sine(d: usize) -> DrivingSpec {
    DrivingSpec::new(DrivingKind::GradientForm { variant: QVariant::Sine, scale: 1.0 }, d).unwrap()
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn representation_identity() -> Outcome {
    let mut worst1 = 0.0_f64;
    let targets: Vec<Vec<i64>> = (-10..=10).map(|x| vec![x]).collect();
    for t in [1, 5, 10, 20, 30] {
        let rep = reconstruct_via_representation(&cosine(1), &sine(1), 0.1, t, &targets).map_err(|e| e.to_string())?;
        worst1 = worst1.max(rep.max_residual);
    }
    let targets: Vec<Vec<i64>> = (-10..=10).flat_map(|x| (-10..=10).map(move |y| vec![x, y])).collect();
    let mut worst2 = 0.0_f64;
    for t in [1, 7, 15] {
        let rep = reconstruct_via_representation(&cosine(2), &sine(2), 0.1, t, &targets).map_err(|e| e.to_string())?;
        worst2 = worst2.max(rep.max_residual);
    }
    ensure(worst1 <= 1e-9 && worst2 <= 1e-9, format!("max residual d=1 {worst1:.2e}, d=2 {worst2:.2e}"))
}

fn lipschitz_preservation() -> Outcome {
    let kinds = |d: usize| -> Vec<DrivingKind> {
        let mut v = vec![
            DrivingKind::Average,
            DrivingKind::LogSumExp { theta: 1.0 },
            DrivingKind::LogSumExp { theta: 4.0 },
            DrivingKind::GradientForm { variant: QVariant::Sine, scale: 1.0 },
            DrivingKind::GradientForm { variant: QVariant::SineNeg, scale: 2.0 },
            DrivingKind::LppMax,
            DrivingKind::RsosMaxmin,
            DrivingKind::Smoothed { base: SmoothBase::LppMax, delta: 0.3, order: 64 },
            DrivingKind::Smoothed { base: SmoothBase::RsosMaxmin, delta: 0.3, order: 64 },
            DrivingKind::Gibbs { potential: Potential::Quadratic },
            DrivingKind::Identity,
        ];
        if d == 1 {
            v.push(DrivingKind::Gibbs { potential: Potential::Quartic { lambda: 0.5 } });
        }
        v
    };
    let data = |d: usize| -> Vec<InitialData> {
        vec![
            cosine(d),
            InitialData::new(InitialProfile::Cosine { amplitude: 0.5, wavevector: (0..d).map(|i| 2.0 - i as f64).collect() }, d).unwrap(),
            InitialData::new(InitialProfile::Linear { slope: (0..d).map(|i| 0.7 - 1.1 * i as f64).collect() }, d).unwrap(),
            InitialData::new(InitialProfile::CappedAbs { cap: 1.0 }, d).unwrap(),
        ]
    };
    let mut steps = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for (d, radius, n_steps) in [(1, 60, 50), (2, 14, 12)] {
        for kind in kinds(d) {
            let spec = DrivingSpec::new(kind, d).map_err(|e| e.to_string())?;
            for g in data(d) {
                for eps in [0.2, 0.05] {
                    let b = LatticeBox::around(&vec![0; d], radius).unwrap();
                    let bound = g.lipschitz * eps;
                    evolve_with(&g, &spec, eps, &b, n_steps, |prev, next| {
                        if prev.time_step == 0 {
                            worst = worst.max(roughness_report(prev).max_increment - bound);
                        }
                        worst = worst.max(roughness_report(next).max_increment - bound);
                        steps += 1;
                        Ok(())
                    })
                    .map_err(|e| e.to_string())?;
                }
            }
        }
    }
    ensure(worst <= 1e-12, format!("{steps} steps, worst (max increment - L eps) {worst:.2e}"))
}

fn h_scaling_slope() -> Outcome {
    let r = h_scaling(&cosine(1), &sine(1), &[0.2, 0.1, 0.05, 0.025], 1.0).map_err(|e| e.to_string())?;
    let slope = r.fit.ok_or("no fit")?.slope;
    let sups: Vec<String> = r.rows.iter().map(|row| format!("{:.3e}", row.sup_h)).collect();
    ensure((1.8..=2.2).contains(&slope), format!("slope {slope:.4}, sup|h| = [{}]", sups.join(", ")))
}

fn linear_closed_form() -> Outcome {
    let report = run_convergence_sweep(&config("kpz_gradient_form_linear.json")).map_err(|e| e.to_string())?;
    let stated = [4.16e-4, 1.04e-4, 2.6e-5];
    let mut ok = report.rows.len() == 3;
    let mut parts = Vec::new();
    for (row, s) in report.rows.iter().zip(stated) {
        let t_steps = guarded_floor(1.0 / (row.epsilon * row.epsilon));
        let mut c = 0.0;
        for _ in 0..t_steps {
            c += (1.0 - row.epsilon.cos()) / 4.0;
        }
        let oracle_err = (c - 0.125_f64).abs();
        ok &= (row.f_eps - c).abs() <= 1e-12;
        ok &= (row.abs_err - oracle_err).abs() <= 1e-9;
        ok &= (row.abs_err - s).abs() <= 0.2 * s;
        parts.push(format!("{:.3e}", row.abs_err));
    }
    ensure(ok, format!("errors [{}] vs stated [4.16e-4, 1.04e-4, 2.6e-5]", parts.join(", ")))
}

fn heat_branch() -> Outcome {
    let report = run_convergence_sweep(&config("heat_average.json")).map_err(|e| e.to_string())?;
    let exact = (-0.5_f64).exp();
    let err = |eps: f64| report.rows.iter().find(|r| r.epsilon == eps).map(|r| r.abs_err).unwrap();
    let limit_ok = report.rows.iter().all(|r| (r.f_limit - exact).abs() < 1e-9);
    let ok = report.branch == Branch::Heat
        && limit_ok
        && err(0.1) <= 1e-2
        && err(0.05) <= 3e-3
        && report.points[0].strictly_decreasing;
    ensure(ok, format!("errors at 0.2/0.1/0.05: {:.3e} {:.3e} {:.3e}", err(0.2), err(0.1), err(0.05)))
}

fn kpz_branch() -> Outcome {
    let report = run_convergence_sweep(&config("kpz_logsumexp.json")).map_err(|e| e.to_string())?;
    let errs = &report.points[0].errors;
    // independent high-resolution reference with the exact coefficients
    let fine = LimitEvaluator::new(cosine(1), 0.5, 0.5, QuadratureConfig { tol: 1e-13, ..QuadratureConfig::default() })
        .map_err(|e| e.to_string())?
        .cole_hopf_eval(1.0, &[0.0])
        .map_err(|e| e.to_string())?;
    let limit_gap = (report.points[0].f_limit - fine).abs();
    let ok = report.branch == Branch::Kpz && report.points[0].strictly_decreasing && errs[2] <= 2e-2 && limit_gap < 1e-6;
    ensure(
        ok,
        format!("errors {:.3e} {:.3e} {:.3e}, limit {:.9} (reference gap {limit_gap:.1e})", errs[0], errs[1], errs[2], report.points[0].f_limit),
    )
}

fn gradient_square() -> Outcome {
    let mut cfg = config("kpz_gradient_form_linear.json");
    cfg.epsilons = vec![0.05];
    cfg.eval_points[0].t = 0.5;
    let r = run_gradient_square_check(&cfg).map_err(|e| e.to_string())?;
    let row = &r.rows[0];
    let rel = (row.h_rescaled - 0.125).abs() / 0.125;
    ensure(rel <= 5e-3, format!("h = {:.6}, target {:.6}, relative error vs 0.125 {rel:.2e}", row.h_rescaled, row.target))
}

fn clt_decay() -> Outcome {
    let times = [4, 16, 64, 256];
    let lazy = clt_error_table(0.5, 0.25, 1, &times).map_err(|e| e.to_string())?;
    let periodic = clt_error_table(0.0, 0.5, 1, &times).map_err(|e| e.to_string())?;
    let o1 = lazy.fitted_order.unwrap_or(f64::NAN);
    let o2 = periodic.fitted_order.unwrap_or(f64::NAN);
    let ok = lazy.strictly_decreasing() && periodic.strictly_decreasing() && o1 >= 1.2 && o2 >= 1.2;
    ensure(ok, format!("fitted order lazy {o1:.3}, parity-doubled {o2:.3}"))
}

fn frozen_branch() -> Outcome {
    let g = cosine(1);
    let id = DrivingSpec::new(DrivingKind::Identity, 1).unwrap();
    let mut count = 0;
    for eps in [0.2, 0.1, 0.05, 0.037] {
        for t in [0.05, 0.5, 1.0, 2.0] {
            for x in [0.0, 0.31, -1.7, 2.25] {
                if guarded_floor(t / (eps * eps)) < 1 {
                    continue;
                }
                let r = evaluate_rescaled(&g, &id, eps, t, &[x], ParityRule::Floor, DEFAULT_MEMORY_CAP).map_err(|e| e.to_string())?;
                let expected = g.value(&[eps * guarded_floor(x / eps) as f64]);
                if r.value.to_bits() != expected.to_bits() {
                    return Err(format!("mismatch at eps={eps}, t={t}, x={x}: {} vs {expected}", r.value));
                }
                count += 1;
            }
        }
    }
    let report = run_convergence_sweep(&config("frozen_identity.json")).map_err(|e| e.to_string())?;
    let sweep_ok = report.branch == Branch::Frozen
        && report.rows.iter().all(|r| r.f_eps.to_bits() == g.value(&[r.epsilon * guarded_floor(r.x[0] / r.epsilon) as f64]).to_bits());
    ensure(sweep_ok, format!("{count} direct evaluations and {} sweep rows bit-exact", report.rows.len()))
}

fn duhamel() -> Outcome {
    let q = QuadratureConfig::default();
    let kpz = LimitEvaluator::new(cosine(1), 0.5, 0.5, q).map_err(|e| e.to_string())?;
    let r = kpz.duhamel_residual(1.0, &[0.0]).map_err(|e| e.to_string())?;
    let heat = LimitEvaluator::new(cosine(1), 0.5, 0.0, q).map_err(|e| e.to_string())?;
    let h = heat.duhamel_residual(1.0, &[0.0]).map_err(|e| e.to_string())?;
    ensure(r.residual <= 5e-3 && h.residual <= q.tol, format!("kpz residual {:.2e}, heat residual {:.2e}", r.residual, h.residual))
}

fn axiom_validation() -> Outcome {
    let mut shipped: Vec<(DrivingKind, usize)> = Vec::new();
    for d in 1..=2 {
        shipped.extend([
            (DrivingKind::Average, d),
            (DrivingKind::LogSumExp { theta: 1.0 }, d),
            (DrivingKind::GradientForm { variant: QVariant::Sine, scale: 1.0 }, d),
            (DrivingKind::GradientForm { variant: QVariant::SineNeg, scale: 1.0 }, d),
            (DrivingKind::LppMax, d),
            (DrivingKind::RsosMaxmin, d),
            (DrivingKind::Smoothed { base: SmoothBase::LppMax, delta: 0.5, order: 64 }, d),
            (DrivingKind::Smoothed { base: SmoothBase::RsosMaxmin, delta: 0.5, order: 64 }, d),
            (DrivingKind::Gibbs { potential: Potential::Quadratic }, d),
            (DrivingKind::Identity, d),
        ]);
    }
    shipped.push((DrivingKind::Gibbs { potential: Potential::Quartic { lambda: 0.5 } }, 1));
    let mut failures = Vec::new();
    for (kind, d) in &shipped {
        let spec = DrivingSpec::new(kind.clone(), *d).map_err(|e| e.to_string())?;
        let report = validate_properties(&spec, 1000, 1e-9, DEFAULT_SEED).map_err(|e| e.to_string())?;
        if !report.passed() {
            failures.push(format!("{} d={d}", spec.name()));
        }
    }
    let flagged = |kind: DrivingKind, d: usize| -> bool {
        let spec = DrivingSpec::new(kind, d).unwrap();
        smoothness_probe(&spec, &DEFAULT_PROBE_STEPS, DEFAULT_PROBE_THRESHOLD).unwrap().verdict == SmoothnessVerdict::NonSmoothFlagged
    };
    let lpp = flagged(DrivingKind::LppMax, 1) && flagged(DrivingKind::LppMax, 2);
    let rsos = flagged(DrivingKind::RsosMaxmin, 2);
    let broken = validate_properties(&DrivingSpec::new(DrivingKind::NonMonotone, 1).unwrap(), 1000, 1e-9, DEFAULT_SEED).map_err(|e| e.to_string())?;
    let mono = broken.check(Axiom::Monotonicity);
    let broken_ok = !mono.passed && mono.witness.is_some();
    ensure(
        failures.is_empty() && lpp && rsos && broken_ok,
        format!(
            "{} kinds validated, failures [{}]; lpp flagged {lpp}, rsos flagged {rsos}; broken kind rejected with witness {broken_ok}",
            shipped.len(),
            failures.join(", ")
        ),
    )
}

fn parity_agreement() -> Outcome {
    let r = run_parity_check(&config("parity_logsumexp.json")).map_err(|e| e.to_string())?;
    let within = r.rows.iter().all(|row| row.within_bound);
    let dec0 = r.parity0.points[0].strictly_decreasing;
    let dec1 = r.parity1.points[0].strictly_decreasing;
    let diffs: Vec<String> = r.rows.iter().map(|row| format!("{:.2e}<={:.2e}", row.difference, row.bound)).collect();
    let e0: Vec<String> = r.parity0.points[0].errors.iter().map(|e| format!("{e:.2e}")).collect();
    let e1: Vec<String> = r.parity1.points[0].errors.iter().map(|e| format!("{e:.2e}")).collect();
    ensure(
        within && dec0 && dec1,
        format!("differences [{}]; errors parity0 [{}], parity1 [{}]", diffs.join(", "), e0.join(", "), e1.join(", ")),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 12] = [
        ("representation identity", representation_identity, Some(Duration::from_secs(30))),
        ("Lipschitz preservation", lipschitz_preservation, None),
        ("h scaling", h_scaling_slope, Some(Duration::from_secs(60))),
        ("linear-data closed form", linear_closed_form, Some(Duration::from_secs(5))),
        ("heat branch", heat_branch, Some(Duration::from_secs(5))),
        ("kpz branch vs Cole-Hopf", kpz_branch, Some(Duration::from_secs(60))),
        ("gradient-squared emergence", gradient_square, Some(Duration::from_secs(5))),
        ("CLT decay", clt_decay, Some(Duration::from_secs(20))),
        ("frozen branch", frozen_branch, None),
        ("Duhamel residual", duhamel, Some(Duration::from_secs(120))),
        ("axiom validation", axiom_validation, None),
        ("parity agreement", parity_agreement, None),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let over = budget.is_some_and(|b| elapsed > b);
        let (status, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over time budget {:?}", budget.unwrap())),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {:>2} {status} {name}: {detail} [{:.2}s]", i + 1, elapsed.as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
