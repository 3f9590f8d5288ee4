//! End-to-end tests driving the compiled `pke` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pke(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pke"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const BASE_CONFIG: &str = r#"
protocol = "bbm92-4"
q = 1.0

[decoherence]
kind = "dephasing"
v_a = 0.98
v_b = 0.98

[channel]
eta_a = 1e-2
eta_b = 1e-2
n_a = 1e-6
n_b = 1e-6
"#;

#[test]
fn compute_reference_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.toml", BASE_CONFIG);
    let out = pke(&["compute", "--config", &cfg, "--m", "2", "--p-pair", "0.01"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    let total = doc["result"]["event_breakdown"]["total"].as_f64().unwrap();
    assert!((total - 1.020816).abs() < 1e-9);
    let e_x = doc["result"]["qbers"]["e_x"].as_f64().unwrap();
    assert!((e_x - 0.02489).abs() < 1e-5);
}

#[test]
fn compute_roundtrips_through_its_own_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.toml", BASE_CONFIG);
    let first = stdout_of(&pke(&[
        "compute", "--config", &cfg, "--m", "2", "--p-pair", "0.01",
    ]));

    // Feed the JSON result back in as the config.
    let replay_cfg = write_config(dir.path(), "replay.json", &first);
    let second = stdout_of(&pke(&["compute", "--config", &replay_cfg]));

    let a: serde_json::Value = serde_json::from_str(&first).unwrap();
    let b: serde_json::Value = serde_json::from_str(&second).unwrap();
    let (pa, pb) = (
        a["result"]["pke"].as_f64().unwrap(),
        b["result"]["pke"].as_f64().unwrap(),
    );
    assert!((pa - pb).abs() <= 1e-12 * pa.abs());
    assert_eq!(first, second);
}

#[test]
fn sweep_csv_header_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.toml", BASE_CONFIG);
    let args = [
        "sweep", "--config", &cfg, "--axis", "n-ratio", "--lo", "1e-6", "--hi", "1e-4", "--count",
        "4", "--format", "csv",
    ];
    let a = stdout_of(&pke(&args));
    let b = stdout_of(&pke(&args));
    assert_eq!(a, b, "sweep output must be bitwise reproducible");
    assert!(a.starts_with("n_ratio_A,n_ratio_B,protocol,m_star,p_pair_star,pke,e_X,e_Z,flags\n"));
    assert_eq!(a.lines().count(), 5);
}

#[test]
fn simulate_is_block_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.toml", BASE_CONFIG);
    let base_args = [
        "simulate", "--config", &cfg, "--m", "1", "--p-pair", "0.01", "--eta", "0.5", "--q", "0.5",
        "--frames", "200000", "--seed", "7",
    ];
    let mut one = base_args.to_vec();
    one.extend(["--blocks", "1"]);
    let mut nine = base_args.to_vec();
    nine.extend(["--blocks", "9"]);

    // Changing only the block partition must leave the output file
    // bitwise identical.
    let a = stdout_of(&pke(&one));
    let b = stdout_of(&pke(&nine));
    assert_eq!(a, b);
    let doc: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert!(doc["tally"]["events"].as_u64().unwrap() > 0);
}

#[test]
fn output_file_writing_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.toml", BASE_CONFIG);
    let out_path = dir.path().join("result.json");
    let to_stdout = stdout_of(&pke(&[
        "compute", "--config", &cfg, "--m", "1", "--p-pair", "0.001",
    ]));
    let out = pke(&[
        "compute",
        "--config",
        &cfg,
        "--m",
        "1",
        "--p-pair",
        "0.001",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&out_path).unwrap(), to_stdout);
}

#[test]
fn config_errors_exit_one() {
    // Missing operating point.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.toml", BASE_CONFIG);
    let out = pke(&["compute", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("m is required"), "stderr: {err}");

    // Unknown protocol.
    let out = pke(&["optimize", "--protocol", "e91"]);
    assert_eq!(out.status.code(), Some(1));

    // Malformed config file names the offending field.
    let bad = write_config(
        dir.path(),
        "bad.toml",
        &format!("{BASE_CONFIG}\nunknown_knob = 3\n"),
    );
    let out = pke(&["compute", "--config", &bad, "--m", "1", "--p-pair", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_knob"));

    // Out-of-range physical parameter.
    let out = pke(&["compute", "--config", &cfg, "--m", "1", "--p-pair", "0.7"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn approx_rejects_unsupported_protocols() {
    let out = pke(&[
        "approx",
        "--protocol",
        "sarg04-4",
        "--kind",
        "dephasing",
        "--v",
        "0.98",
        "--eta",
        "1e-3",
        "--noise",
        "1e-9",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_two() {
    // Perfect visibility puts the closed forms out of regime (disturbance
    // zero): a numerical failure, not a config error.
    let out = pke(&[
        "approx",
        "--protocol",
        "bbm92-4",
        "--kind",
        "dephasing",
        "--v",
        "1.0",
        "--eta",
        "1e-3",
        "--noise",
        "1e-9",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_runs_clean() {
    let out = pke(&["validate"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.starts_with("ok")));
}

#[test]
fn approx_reports_both_xi_forms() {
    let out = stdout_of(&pke(&[
        "approx",
        "--protocol",
        "bbm92-4",
        "--q",
        "1",
        "--kind",
        "dephasing",
        "--v",
        "0.98",
        "--eta",
        "1e-3",
        "--noise",
        "1e-9",
    ]));
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    let simplified = doc["simplified"]["m_star_cont"].as_f64().unwrap();
    let full = doc["full"]["m_star_cont"].as_f64().unwrap();
    assert!((simplified - 12.8655).abs() < 1e-3);
    assert!((simplified - full).abs() < 0.1);
}
