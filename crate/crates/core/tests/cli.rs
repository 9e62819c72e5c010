use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kpz-lab"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sweep_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for ext in ["json", "csv"] {
        let a = dir.path().join(format!("a.{ext}"));
        let b = dir.path().join(format!("b.{ext}"));
        for out in [&a, &b] {
            let o = run(&["sweep", "--config", &cfg("kpz_gradient_form_linear.json"), "--out", path(out)]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
    let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn walk_and_evolve_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("walk.csv");
    let o = run(&["walk", "--alpha", "0.5", "--beta", "0.25", "--dim", "1", "--times", "4,16,64", "--out", path(&w)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&w).unwrap();
    assert!(text.starts_with("t,sup_err,scaled_err,fitted_order\n"));
    assert_eq!(text.lines().count(), 4);

    let e = dir.path().join("slice.csv");
    let o = run(&["evolve", "--config", &cfg("heat_average.json"), "--epsilon", "0.1", "--steps", "4", "--radius", "3", "--out", path(&e)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&e).unwrap();
    assert!(text.starts_with("x1,height\n"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn limit_and_duhamel_print_values() {
    let o = run(&["limit", "--config", &cfg("heat_average.json"), "--points", "1:0;2:0.5"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x1,f");
    let f: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
    assert!((f - (-0.5_f64).exp()).abs() < 1e-8);

    let o = run(&["duhamel", "--config", &cfg("kpz_logsumexp.json"), "--point", "1:0"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["residual"].as_f64().unwrap() < 5e-3);
}

#[test]
fn validate_and_coeffs_report_json() {
    let o = run(&["validate", "--config", &cfg("kpz_logsumexp.json"), "--samples", "200"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["smoothness"]["verdict"], "c2_consistent");
    let o = run(&["coeffs", "--config", &cfg("kpz_logsumexp.json")]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["consistency"]["branch"], "kpz");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    let text = std::fs::read_to_string(configs().join("heat_average.json"))
        .unwrap()
        .replace(r#"{ "kind": "average" }"#, r#"{ "kind": "non_monotone" }"#);
    std::fs::write(&broken, text).unwrap();
    assert_eq!(run(&["validate", "--config", path(&broken), "--samples", "200"]).status.code(), Some(1));
    assert_eq!(run(&["sweep", "--config", path(&broken), "--out", path(&dir.path().join("x.csv"))]).status.code(), Some(1));
    assert_eq!(run(&["sweep", "--config", "/no/such/config.json", "--out", "x.csv"]).status.code(), Some(3));
    assert_eq!(run(&["walk", "--alpha", "0.5", "--beta", "0.3", "--times", "4", "--out", "x.csv"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let huge = run(&["evolve", "--config", &cfg("heat_average.json"), "--epsilon", "0.1", "--steps", "200000000", "--out", "x.csv"]);
    assert_eq!(huge.status.code(), Some(3));
}
