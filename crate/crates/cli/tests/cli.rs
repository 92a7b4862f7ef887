use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 6] = [
    "verify-special",
    "one-particle",
    "bounds-check",
    "fock-run",
    "thermo-limit",
    "sigma-scan",
];

const HEADER: &str = "experiment,check,params,measured,bound,budget,pass";

fn run(sub: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = out.join(format!("{sub}-input.json"));
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_lr-fermi"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("LR_FERMI_JOBS")
        .output()
        .unwrap()
}

fn csv(out: &Path, sub: &str) -> String {
    fs::read_to_string(out.join(format!("{sub}.csv"))).unwrap()
}

#[test]
fn empty_experiment_list_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    for sub in SUBCOMMANDS {
        let out = run(sub, r#"{"experiments": []}"#, dir.path(), &[]);
        assert_eq!(out.status.code(), Some(0), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(csv(dir.path(), sub), format!("{HEADER}\n"));
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("{sub}.json"))).unwrap()).unwrap();
        assert_eq!(summary["counts"]["records"], 0);
        assert!(summary["metadata"]["design"]["d3"]["1"].is_number());
    }
}

#[test]
fn default_special_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("verify-special", r#"{"experiments": [{}]}"#, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let body = csv(dir.path(), "verify-special");
    let rows: Vec<&str> = body.lines().skip(1).collect();
    assert!(rows.len() > 1000);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
}

#[test]
fn floats_have_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiments": [{"rates": [1.0], "factors": [2], "radius_points": 2, "bessel_orders": [0.5], "bessel_points": 1}]}"#;
    assert_eq!(run("verify-special", cfg, dir.path(), &[]).status.code(), Some(0));
    let body = csv(dir.path(), "verify-special");
    let row: Vec<&str> = body.lines().nth(1).unwrap().split(',').collect();
    let mantissa = row[3].split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17, "{}", row[3]);
}

const MC_CONFIG: &str = r#"{
  "seed": 7,
  "experiments": [
    {"times": [0.25], "separations": [0.0, 0.5], "order": 6,
     "quadrature": {"mc_strata": 256}, "tolerance": 1e-3}
  ]
}"#;

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run("one-particle", MC_CONFIG, a.path(), &["--jobs", "1"]);
    let second = run("one-particle", MC_CONFIG, b.path(), &["--jobs", "3"]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(csv(a.path(), "one-particle"), csv(b.path(), "one-particle"));

    let reseeded = run("one-particle", MC_CONFIG, b.path(), &["--seed", "8"]);
    assert_eq!(reseeded.status.code(), Some(0));
    assert_ne!(csv(a.path(), "one-particle"), csv(b.path(), "one-particle"));
}

#[test]
fn monte_carlo_without_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiments": [{"times": [0.25], "order": 6}]}"#;
    let out = run("one-particle", cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn invalid_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "{\n  \"experiments\": [\n    {\"sigma\": 1.0},\n    {\"sigma\": 0.0}\n  ]\n}\n";
    let out = run("bounds-check", cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 4") && msg.contains("sigma"), "{msg}");

    let out = run("fock-run", "{\"experiments\": [{\"sites\": 20}]}", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = run("fock-run", "{ not json", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn job_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"experiments": []}"#).unwrap();
    let with_env = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_lr-fermi"))
            .args(["sigma-scan", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .env("LR_FERMI_JOBS", v)
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(with_env("2"), Some(0));
    assert_eq!(with_env("many"), Some(2));
    assert_eq!(with_env("0"), Some(2));
}

#[test]
fn failing_check_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // Remainder of the many-body expansion at the reference constants is
    // nowhere near 1e-6 for N <= 60.
    let cfg = r#"{"experiments": [{"times": [0.5], "separations": [0.0],
        "remainder": {"time": 1.0, "max_order": 60, "tolerance": 1e-6}}]}"#;
    let out = run("bounds-check", cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(csv(dir.path(), "bounds-check").contains("remainder_tolerance"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
}

#[test]
fn small_lattice_runs() {
    let dir = tempfile::tempdir().unwrap();
    let fock = r#"{"experiments": [{"sites": 6, "region": [0, 2], "source": 1, "separations": [2, 3, 4],
        "require_decreasing": false, "max_slope": null}]}"#;
    let out = run("fock-run", fock, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv(dir.path(), "fock-run").lines().count(), 4);

    let thermo = r#"{"experiments": [{"sites": 7, "max_ratio": 1.0}]}"#;
    let out = run("thermo-limit", thermo, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let sigma = r#"{"experiments": [{"box_length": 8.0, "points": 128, "sigmas": [0.8, 0.4]}]}"#;
    let out = run("sigma-scan", sigma, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
