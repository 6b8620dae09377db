use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cachehelper"));
    c.env_remove("CACHEHELPER_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .parse()
        .unwrap()
}

fn reference_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/reference.toml")
        .to_string_lossy()
        .into_owned()
}

#[test]
fn linkprobs_prints_every_link() {
    let o = run(&["linkprobs"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 9);
    assert!((value(&text, "P_S->U") - 0.903).abs() <= 1e-3);
    assert!((value(&text, "P_D->U/S") - 0.029).abs() <= 1e-3);
}

#[test]
fn hitprofile_from_reference_config() {
    let o = run(&["--config", &reference_config(), "hitprofile"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!((value(&text, "q_u") - 0.865).abs() <= 1e-3);
    assert!((value(&text, "p_hd") - 0.206).abs() <= 1e-3);
    assert!((value(&text, "p_hs") - 0.221).abs() <= 1e-3);
}

#[test]
fn mu_mode_flag_changes_service_rate() {
    let v = value(&stdout(&run(&["--mu-mode", "verbatim", "analytic"])), "mu");
    let c = value(&stdout(&run(&["--mu-mode", "corrected", "analytic"])), "mu");
    assert!(c > v);
}

#[test]
fn delay_reports_closed_form_residual() {
    let text = stdout(&run(&["delay"]));
    assert!(value(&text, "closed_form_max_residual") < 1e-10);
    assert!(value(&text, "d_u") > 1.0);
}

#[test]
fn optimize_saturated_quarter_weight() {
    let text = stdout(&run(&["optimize", "--regime", "unstable", "--w", "0.25"]));
    assert!((value(&text, "t_w") - 0.430).abs() <= 2e-3);
    assert_eq!(value(&text, "q_c"), 1.0);
}

#[test]
fn simulate_is_seeded() {
    let args = ["--slots", "50000", "--seed", "7", "simulate"];
    let a = stdout(&run(&args));
    let b = stdout(&run(&args));
    assert_eq!(a, b);
    assert!(value(&a, "t_u_z") < 5.0);
}

#[test]
fn sweep_writes_into_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("CACHEHELPER_OUT", dir.path())
        .args(["sweep", "--axis", "access.lambda=0.1:0.3:0.1"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep_access_lambda.csv")).unwrap();
    let data: Vec<_> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 4);
    assert!(data[0].starts_with("access.lambda,status,mu,"));
}

#[test]
fn reproduce_passing_target_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "reproduce", "cache_table"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(dir.path().join("cache_table.csv").exists());
    assert!(dir.path().join("cache_table_checks.csv").exists());
}

#[test]
fn reproduce_failing_target_exits_nonzero() {
    // The delay-vs-alpha shape check fails on the analytic model at delta = 0.5.
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "reproduce", "fig_delay_vs_alpha"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains(": FAIL"));
}

#[test]
fn reproduce_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        run(&["--out", d.path().to_str().unwrap(), "reproduce", "unstable_opt_table_MD0"]);
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap());
    }
}

#[test]
fn unknown_target_is_an_error() {
    let o = run(&["reproduce", "no_such_table"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown target"));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[phy.distance_m]\nDC-U = -3.0\n").unwrap();
    let o = run(&["--config", path.to_str().unwrap(), "analytic"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("phy.distance_m.DC-U"));
}

#[test]
fn zero_jobs_rejected() {
    let o = run(&["--jobs", "0", "linkprobs"]);
    assert!(!o.status.success());
}
