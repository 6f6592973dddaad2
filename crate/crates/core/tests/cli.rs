use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use untrusted_qkd::config::RunConfig;

fn qkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkd"))
        .args(args)
        .env("QKD_THREADS", "2")
        .output()
        .expect("run qkd")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in output"))
        .parse()
        .unwrap()
}

#[test]
fn gllp_rate_at_twenty_km() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkd(&[
        "--out",
        path(dir.path()),
        "rate",
        "--protocol",
        "gllp",
        "--distance",
        "20",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(field(&text, "rate") > 0.0);
    assert!((field(&text, "ratio") - 0.977).abs() < 0.03);
    let csv = fs::read_to_string(dir.path().join("rate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn equal_lambdas_exit_with_condition_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[protocol]\nkind = \"weak_vacuum\"\nlambda_signal = 2e-7\nlambda_decoy = 2e-7\n",
    )
    .unwrap();
    let o = qkd(&["--config", path(&cfg), "--out", path(dir.path()), "rate"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Condition 2"));
}

#[test]
fn vacuum_signal_echoes_background_yield() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[protocol]\nkind = \"gllp\"\nlambda_signal = 0.0\ndistance_km = 10\n",
    )
    .unwrap();
    let o = qkd(&["--config", path(&cfg), "--out", path(dir.path()), "rate"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&stdout(&o), "Q_e[signal]"), 1.7e-6);
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[detector]\neta = 0.1\n").unwrap();
    let o = qkd(&["--config", path(&cfg), "rate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = qkd(&["--config", path(&dir.path().join("missing.toml")), "rate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkd(&[
        "--out",
        path(dir.path()),
        "verify",
        "--trials",
        "1",
        "--seed",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("verify.csv").exists());
    let o = qkd(&[
        "--out",
        path(dir.path()),
        "verify",
        "--trials",
        "10",
        "--corrupt-bound",
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn max_distance_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkd(&[
        "--out",
        path(dir.path()),
        "max-distance",
        "--protocol",
        "wv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let gap = field(&text, "gap_km");
    assert!(gap > 0.0 && gap < 20.0);

    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[sweep]\ndistances_km = [0, 30]\ndelta_grid = [0.004, 0.01, 0.11]\n",
    )
    .unwrap();
    let o = qkd(&[
        "--config",
        path(&cfg),
        "--out",
        path(dir.path()),
        "sweep-delta",
        "--protocol",
        "wv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("sweep_delta.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn config_round_trip() {
    let text = "\
[source]
mean_photons = 1000000.0
distribution = \"poisson_exact\"
sequence_length = 500000000

[window]
delta = 0.02
epsilon = 0.0001
decoy_tagged = 0.05

[detector]
eta_bob = 0.045
alpha_db_per_km = 0.21
y0 = 1.7e-6
e_det = 0.033
e0 = 0.5

[protocol]
kind = \"one_decoy\"
lambda_signal = 5e-7
lambda_decoy = 1e-7
sift_factor = 0.5
ec_inefficiency = 1.22
distance_km = 25.0

[sweep]
distances_km = [0.0, 10.0]
delta_grid = [0.01]

[sweep.lambda_grid]
min = 1e-9
max = 1e-6
points_per_decade = 10

[output]
path = \"results\"
";
    let a = RunConfig::from_toml_str(text).unwrap();
    let b = RunConfig::from_toml_str(&a.to_toml_string().unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(b.protocol.lambda_decoy, Some(1e-7));
    assert_eq!(b.window.decoy_tagged, Some(0.05));
}
