use std::path::Path;

use replica_sync::cli::{run, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, THREADS_ENV};

fn run_to(out: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["replica-sync".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(["--out".to_string(), out.display().to_string()]);
    run(argv)
}

/// Header and rows of a CSV result, skipping the config comment.
fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config="));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], row: &[String], name: &str) -> String {
    row[header.iter().position(|h| h == name).unwrap()].clone()
}

#[test]
fn invalid_invocations_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(run_to(&out, &["no-such-command"]), EXIT_INVALID);
    assert_eq!(run_to(&out, &["so2", "--lambda", "-1"]), EXIT_INVALID);
    assert_eq!(run_to(&out, &["solve"]), EXIT_INVALID);
    assert_eq!(run_to(&out, &["classify", "--group", "cyclic", "--k", "1"]), EXIT_INVALID);
    assert_eq!(run_to(&out, &["qa-spectrum"]), EXIT_INVALID);
}

#[test]
fn strict_mode_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "mc_samples = 200\ninner_resolution = 64\n\n[solver]\nmax_iter = 1\n").unwrap();
    let out = dir.path().join("solve.csv");
    let args = ["qa-solve", "--config", cfg.to_str().unwrap(), "--kernel", "rbf", "--scale", "3", "--rank", "2", "--nodes", "32", "--strict"];
    assert_eq!(run_to(&out, &args), EXIT_NOT_CONVERGED);
    assert_eq!(run_to(&out, &args[..args.len() - 1]), EXIT_OK);
}

#[test]
fn so2_below_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("so2.csv");
    assert_eq!(run_to(&out, &["so2", "--lambda", "0.5"]), EXIT_OK);
    let (h, rows) = read_rows(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(column(&h, &rows[0], "q_star").parse::<f64>().unwrap(), 0.0);
    assert_eq!(column(&h, &rows[0], "mi").parse::<f64>().unwrap(), 0.25);
    assert_eq!(column(&h, &rows[0], "mmse").parse::<f64>().unwrap(), 2.0);
}

#[test]
fn threshold_and_classify_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    assert_eq!(run_to(&out, &["threshold", "--group", "so2", "--lambda", "0.5"]), EXIT_OK);
    let (h, rows) = read_rows(&out);
    assert!((column(&h, &rows[0], "lambda_c").parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(column(&h, &rows[0], "stable_at_zero"), "true");

    assert_eq!(run_to(&out, &["classify", "--group", "sym", "--k", "5"]), EXIT_OK);
    let (h, rows) = read_rows(&out);
    assert_eq!(column(&h, &rows[0], "type"), "RealType");
    assert_eq!(column(&h, &rows[0], "dim"), "4");
    assert!((column(&h, &rows[0], "threshold").parse::<f64>().unwrap() - 4.0).abs() < 1e-9);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve.csv");
    let args = ["solve", "--group", "sok", "--k", "3", "--lambda", "6", "--mc-samples", "400", "--inner-resolution", "64", "--seed", "5"];
    let mut with_flag = args.to_vec();
    with_flag.extend(["--threads", "1"]);
    assert_eq!(run_to(&out, &with_flag), EXIT_OK);
    let a = std::fs::read(&out).unwrap();
    std::env::set_var(THREADS_ENV, "3");
    let code = run_to(&out, &args);
    std::env::remove_var(THREADS_ENV);
    assert_eq!(code, EXIT_OK);
    assert_eq!(a, std::fs::read(&out).unwrap());
}

#[test]
fn json_output_embeds_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("so2.json");
    assert_eq!(run_to(&out, &["so2", "--lambda", "2,4", "--format", "json"]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["command"], "so2");
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["config"]["lambdas"][1], 4.0);
}

#[test]
fn phase_diagram_skips_the_critical_band() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pd.csv");
    let base = ["phase-diagram", "--group", "so2", "--lambda", "0.5,1.0,1.01,2", "--mc-samples", "200", "--inner-resolution", "64"];
    assert_eq!(run_to(&out, &base), EXIT_OK);
    let (h, rows) = read_rows(&out);
    let kept: Vec<String> = rows.iter().map(|r| column(&h, r, "multiplier")).collect();
    assert_eq!(kept.len(), 2, "{kept:?}");
    let mut all = base.to_vec();
    all.extend(["--critical-band", "0"]);
    assert_eq!(run_to(&out, &all), EXIT_OK);
    assert_eq!(read_rows(&out).1.len(), 4);
    all.pop();
    all.push("1.5");
    assert_eq!(run_to(&out, &all), EXIT_INVALID);
}
