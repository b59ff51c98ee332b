use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dlangevin::io::read_density;

const SMALL: &str = r#"
seed = 3

[potential]
name = "double_well"
params = { well_sep = 1.0, depth_asymmetry = 0.0, taper_radius = 3.0 }

[model]
lambda = 0.5
eta = 0.5
m = 2.0

[grid]
lo = [-4.0]
hi = [4.0]
n = [128]

[initial]
kind = "gaussian"
mean = [0.5]
std = 0.5

[fpe]
t_end = 0.1
sample_every = 10

[jko]
tau = 0.05
t_end = 0.1

[particles]
n = 400
dt = 0.01
t_end = 0.1
sample_every = 5
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn cli(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlangevin"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn fpe_run_writes_diagnostics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = cli("fpe", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let diag = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("# t,J,lm_norm,kl,dissipation,mass,min_value\n"));
    assert!(diag.lines().count() >= 3);
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "fpe");
    // Defaults are echoed.
    assert_eq!(m["config"]["particles"]["kde"], "silverman");
    let rho = read_density(&out.join("rho_final.csv")).unwrap();
    assert!((rho.mass() - 1.0).abs() < 1e-12);
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("lambda = 0.5", "lamda = 0.5"));
    let o = cli("fpe", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli("fpe", &dir.path().join("absent.toml"), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let text = SMALL.replace("kind = \"gaussian\"\nmean = [0.5]\nstd = 0.5", "kind = \"file\"\npath = \"/nonexistent/rho.csv\"");
    let cfg = write_config(dir.path(), &text);
    let o = cli("fpe", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn theorem_mode_rejects_lambda_above_e_over_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("lambda = 0.5", "lambda = 1.5"));
    let out = dir.path().join("out");
    assert_eq!(cli("fpe", &cfg, &out, &[]).status.code(), Some(0));
    let out2 = dir.path().join("out2");
    let o = cli("fpe", &cfg, &out2, &["--theorem-mode"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out2.join("diagnostics.csv").exists());
}

#[test]
fn invariant_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    assert_eq!(cli("invariant", &cfg, &out, &[]).status.code(), Some(0));
    let rho = read_density(&out.join("rho_inf.csv")).unwrap();
    assert!((rho.mass() - 1.0).abs() < 1e-8);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["identity_residual"].as_f64().unwrap() <= 1e-8);
    assert!(report["c_star"].is_f64());

    // Feeding ρ_∞ back as the initial density leaves it in place.
    let text = SMALL.replace(
        "kind = \"gaussian\"\nmean = [0.5]\nstd = 0.5",
        &format!("kind = \"file\"\npath = {:?}", out.join("rho_inf.csv").display().to_string()),
    );
    let cfg = write_config(dir.path(), &text);
    let out2 = dir.path().join("out2");
    assert_eq!(cli("fpe", &cfg, &out2, &[]).status.code(), Some(0));
    let end = read_density(&out2.join("rho_final.csv")).unwrap();
    assert!(end.w2_distance(&rho).unwrap() < 1e-6);
}

#[test]
fn compare_reports_tolerance_failures_with_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[compare]\nmethods = [\"fpe\", \"jko\", \"particles\"]\nw2_tol = 1e-9\n");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = cli("compare", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(csv.starts_with("# t,method,reference,w2,kl,w2_tol,kl_tol,pass\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",false")));
    assert!(manifest(&out)["status"].as_str().unwrap().contains("tolerance"));

    let loose = text.replace("w2_tol = 1e-9", "w2_tol = 0.2");
    let cfg = write_config(dir.path(), &loose);
    assert_eq!(cli("compare", &cfg, &dir.path().join("out2"), &[]).status.code(), Some(0));
}

#[test]
fn seed_flag_controls_particle_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let read = |o: &Path| std::fs::read(o.join("positions.csv")).unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (o, s) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        assert_eq!(cli("particles", &cfg, o, &["--seed", s]).status.code(), Some(0));
    }
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn particle_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = cli("particles", &cfg, &out, &["--n", "150", "--dt", "0.02", "--t-end", "0.04", "--kde", "fixed", "--bandwidth", "0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let pos = std::fs::read_to_string(out.join("positions.csv")).unwrap();
    assert_eq!(pos.lines().count(), 151);
    let m = manifest(&out);
    assert_eq!(m["config"]["particles"]["kde"], "fixed");
    assert_eq!(m["config"]["particles"]["bandwidth"], 0.3);
    assert_eq!(m["config"]["particles"]["t_end"], 0.04);
    let o = cli("particles", &cfg, &dir.path().join("o2"), &["--kde", "fixed"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn two_dimensional_jko_runs() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
[potential]
name = "egg_carton"
[model]
lambda = 0.5
eta = 0.5
m = 2.0
[grid]
lo = [-3.0, -3.0]
hi = [3.0, 3.0]
n = [16, 16]
[initial]
kind = "gaussian"
std = 0.6
[jko]
tau = 0.1
t_end = 0.2
"#;
    let cfg = write_config(dir.path(), text);
    let out = dir.path().join("out");
    let o = cli("jko", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let diag = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let j: Vec<f64> = diag.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(j.len(), 3);
    assert!(j.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let rho = read_density(&out.join("rho_final.csv")).unwrap();
    assert_eq!(rho.grid().n(), &[16, 16]);
}
