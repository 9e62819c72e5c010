use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use kpz_lab::coeffs::{check_coefficient_consistency, extract_coefficients, DEFAULT_FD_STEPS};
use kpz_lab::driving::{smoothness_probe, validate_properties, DEFAULT_PROBE_STEPS, DEFAULT_PROBE_THRESHOLD};
use kpz_lab::harness::{emit_report, prepare, run_convergence_sweep, ExperimentConfig, ReportFormat, DEFAULT_VALIDATION_SAMPLES};
use kpz_lab::lattice::{evolve_with, LatticeBox};
use kpz_lab::limit::LimitEvaluator;
use kpz_lab::rwalk::clt_error_table;
use kpz_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "kpz-lab", version, about = "Lattice surface growth and its deterministic KPZ scaling limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the growth axioms on seeded random samples and probe smoothness.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VALIDATION_SAMPLES)]
        samples: usize,
    },
    /// Extract alpha, beta and the gamma coefficients.
    Coeffs {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evolve the lattice surface and dump the final slice as CSV.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        steps: usize,
        /// Half-width of the box kept after the last step.
        #[arg(long, default_value_t = 10)]
        radius: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Local CLT error table for a lazy random walk.
    Walk {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, value_delimiter = ',')]
        times: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the continuum limit at points "t:x1[,x2..];...".
    Limit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        points: String,
    },
    /// Compare rescaled surfaces with the limit over the configured epsilons.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// csv or json; inferred from the file extension by default.
        #[arg(long)]
        format: Option<String>,
    },
    /// Residual of the Duhamel equation at one point "t:x" (d = 1).
    Duhamel {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        point: String,
    },
}

fn parse_point(s: &str) -> Result<(f64, Vec<f64>)> {
    let bad = || Error::InvalidParameter(format!("cannot parse point {s:?}; expected t:x1[,x2..]"));
    let (t, x) = s.trim().split_once(':').ok_or_else(bad)?;
    let t: f64 = t.trim().parse().map_err(|_| bad())?;
    let x = x.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
    Ok((t, x))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { config, samples } => {
            let cfg = ExperimentConfig::load(&config)?;
            let spec = cfg.driving_spec()?;
            let report = validate_properties(&spec, samples, cfg.tolerance("axiom", 1e-9), cfg.seed)?;
            let probe = smoothness_probe(&spec, &DEFAULT_PROBE_STEPS, DEFAULT_PROBE_THRESHOLD)?;
            print_json(&serde_json::json!({ "axioms": report, "smoothness": probe }))?;
            if !report.passed() {
                return Err(Error::ValidationFailed(spec.name().to_string()));
            }
        }
        Command::Coeffs { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let cs = extract_coefficients(&cfg.driving_spec()?, &DEFAULT_FD_STEPS)?;
            let consistency = check_coefficient_consistency(&cs, cfg.dimension, cfg.tolerance("consistency", 1e-6));
            print_json(&serde_json::json!({ "coefficients": cs, "consistency": consistency }))?;
            if !consistency.passed() {
                return Err(Error::InconsistentCoefficients("see report".into()));
            }
        }
        Command::Evolve { config, epsilon, steps, radius, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let spec = cfg.driving_spec()?;
            let g = cfg.initial_data()?;
            let half = steps + radius;
            kpz_lab::lattice::check_memory(cfg.dimension, half, kpz_lab::lattice::DEFAULT_MEMORY_CAP)?;
            let domain = LatticeBox::around(&vec![0; cfg.dimension], half as i64)?;
            let last = evolve_with(&g, &spec, epsilon, &domain, steps, |_, _| Ok(()))?;
            std::fs::write(out, last.to_csv())?;
        }
        Command::Walk { alpha, beta, dim, times, out } => {
            let table = clt_error_table(alpha, beta, dim, &times)?;
            std::fs::write(out, table.to_csv())?;
        }
        Command::Limit { config, points } => {
            let cfg = ExperimentConfig::load(&config)?;
            let prep = prepare(&cfg)?;
            let ev: &LimitEvaluator = &prep.limit;
            let mut text = String::from("t,");
            for i in 1..=cfg.dimension {
                text.push_str(&format!("x{i},"));
            }
            text.push_str("f\n");
            for p in points.split(';').filter(|p| !p.trim().is_empty()) {
                let (t, x) = parse_point(p)?;
                let f = ev.cole_hopf_eval(t, &x)?;
                text.push_str(&format!("{t},"));
                for xi in &x {
                    text.push_str(&format!("{xi},"));
                }
                text.push_str(&format!("{f}\n"));
            }
            print!("{text}");
        }
        Command::Sweep { config, out, format } => {
            let cfg = ExperimentConfig::load(&config)?;
            let format = match format {
                Some(f) => f.parse()?,
                None => ReportFormat::from_path(&out),
            };
            let start = Instant::now();
            let report = run_convergence_sweep(&cfg)?;
            emit_report(&report, format, &out)?;
            eprintln!("sweep finished in {:.2}s", start.elapsed().as_secs_f64());
            for p in &report.points {
                let order = p.fitted_order.map_or(f64::NAN, |f| f.slope);
                eprintln!("t={} x={:?}: errors {:?}, fitted order {order:.3}", p.t, p.x, p.errors);
            }
        }
        Command::Duhamel { config, point } => {
            let cfg = ExperimentConfig::load(&config)?;
            let prep = prepare(&cfg)?;
            let (t, x) = parse_point(&point)?;
            let r = prep.limit.duhamel_residual(t, &x)?;
            print_json(&r)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
