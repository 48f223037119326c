use std::path::Path;
use std::process::{Command, Output};

fn qzeno(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qzeno"))
        .args(args)
        .env_remove("QZENO_WORKERS")
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn qzeno")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn field(out: &Output, key: &str) -> String {
    let text = stdout(out);
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` line in\n{text}"))
        .to_string()
}

fn number(out: &Output, key: &str) -> f64 {
    field(out, key).parse().unwrap()
}

#[test]
fn tau_m_from_detector_parameters() {
    let out = qzeno(&["oracle", "tau_m", "--gamma", "10", "--lambda", "1"]);
    assert!(out.status.success());
    assert_eq!(number(&out, "value"), 5.0);
}

#[test]
fn measured_decay_oracle() {
    let out = qzeno(&["oracle", "measured-decay", "--lambda-band", "0.5", "--tau-m", "5", "--gamma0", "0.01"]);
    assert!(out.status.success());
    assert!((number(&out, "rate") - 0.0075779).abs() < 5e-7);
    assert_eq!(field(&out, "valid"), "true");
}

#[test]
fn anti_zeno_oracle_flags_marginal_series() {
    let out = qzeno(&[
        "oracle",
        "anti-zeno",
        "--a",
        "2",
        "--lambda-band",
        "0.5",
        "--tau-m",
        "5",
        "--gamma0",
        "0.01",
    ]);
    assert!(out.status.success());
    assert!((number(&out, "rate") - 0.016430).abs() < 5e-7);
    assert_eq!(field(&out, "note"), "Λτ_M=2.5, series marginal");
}

#[test]
fn tau_m_can_come_from_gamma_and_lambda() {
    let direct = qzeno(&["oracle", "zeno", "--omega-r", "0.1", "--tau-m", "5"]);
    let derived = qzeno(&["oracle", "zeno", "--omega-r", "0.1", "--gamma", "10", "--lambda", "1"]);
    assert_eq!(number(&direct, "rate"), number(&derived, "rate"));
    assert!((number(&direct, "rate") - 0.025).abs() < 1e-15);
}

#[test]
fn missing_oracle_parameters_exit_2() {
    for args in [
        &["oracle", "tau_m", "--gamma", "10"][..],
        &["oracle", "zeno", "--tau-m", "5"],
        &["oracle", "measured-decay", "--tau-m", "5", "--gamma0", "0.01"],
        &["oracle", "golden-rule", "--lambda-band", "0.5"],
    ] {
        let out = qzeno(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("missing"), "{args:?}");
    }
}

#[test]
fn config_errors_exit_2_with_key() {
    let out = qzeno(&["simulate", "fig2", "--set", "simulation.dt=-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulation.dt"));

    let out = qzeno(&["simulate", "fig2", "--set", "simulation.stride=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stride"));

    assert_eq!(qzeno(&["simulate", "fig99"]).status.code(), Some(2));
    assert_eq!(qzeno(&["simulate"]).status.code(), Some(2));
}

#[test]
fn unreadable_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[model]\nkind = \"detector-measurement\"\n[simulation]\ndt = 0.1\n").unwrap();
    let out = qzeno(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.toml"));
}

fn simulate_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate",
        "fig2",
        "-n",
        "6",
        "--set",
        "simulation.t_max=3.0",
        "--output",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    qzeno(&args)
}

#[test]
fn simulate_writes_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = simulate_into(&dir, &["--set", "output.per_trajectory=true", "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.join("ensemble.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,rho_aa_mean,rho_aa_stderr"));
    assert_eq!(csv.lines().count(), 1 + 31);

    let manifest = std::fs::read_to_string(dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("preset = \"fig2\""));
    assert!(manifest.contains("master_seed = 9"));
    assert!(manifest.contains("n_trajectories = 6"));
    assert!(manifest.contains("t_max = 3.0"));

    for i in 0..6 {
        let traj = std::fs::read_to_string(dir.join(format!("trajectory_{i:05}.csv"))).unwrap();
        assert!(traj.lines().next().unwrap().contains("jump"));
    }
}

#[test]
fn simulate_is_reproducible_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(simulate_into(&a, &["--workers", "1"]).status.success());
    assert!(simulate_into(&b, &["--workers", "3"]).status.success());
    assert_eq!(
        std::fs::read(a.join("ensemble.csv")).unwrap(),
        std::fs::read(b.join("ensemble.csv")).unwrap()
    );
}

#[test]
fn validate_reports_one_line_per_criterion() {
    let out = qzeno(&["validate", "freedecay"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    let lines: Vec<_> = text.lines().filter(|l| l.contains("criterion=")).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.starts_with("PASS ") && l.contains("measured=") && l.contains("expected=")));
}

#[test]
fn unknown_suite_exits_2() {
    assert_eq!(qzeno(&["validate", "everything"]).status.code(), Some(2));
}
