use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn locclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locclab"))
        .args(args)
        .env_remove("LOCCLAB_SEED")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("locclab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn feasibility_of_type_three_to_type_two_is_inconsistent() {
    let out = locclab(&["sep", "feasibility", "--initial", "2,3,5,7", "--target", "2,3"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["status"], "negative");
    assert_eq!(r["result"]["feasibility"]["verdict"], "Inconsistent");
}

#[test]
fn exact_feasibility_prints_an_integer_certificate() {
    let out = locclab(&["sep", "feasibility", "--initial", "2,3,5,7", "--target", "2,3", "--exact"]);
    assert_eq!(out.status.code(), Some(1));
    let cert = &report(&out)["result"]["feasibility"]["certificate"];
    assert_eq!(cert["exact_value"], "2");
    assert_eq!(cert["exact_multipliers"].as_array().unwrap().len(), 6);
}

#[test]
fn boundary_point_is_consistent() {
    let out = locclab(&["sep", "boundary", "--target", "2,3", "--alpha1p", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let b = report(&out)["result"]["exact_boundary"].as_str().unwrap().to_string();
    let out = locclab(&["sep", "feasibility", "--initial", &format!("4,1,{b},1"), "--target", "2,3", "--exact"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn decomposition_reproduces_the_state() {
    let out = locclab(&["decomp", "verify", "--params", "2,3,5,7"]);
    assert_eq!(out.status.code(), Some(0));
    let residual = report(&out)["result"]["residual"].as_f64().unwrap();
    assert!(residual < 1e-9, "residual {residual:e}");
}

#[test]
fn builtin_three_round_protocol_runs_deterministically() {
    let path = scratch("sec4.json");
    let out = locclab(&["protocol", "builtin", "--name", "sec4_threeround", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let out = locclab(&["protocol", "run", "--file", path.to_str().unwrap(), "--input", "A3"]);
    assert_eq!(out.status.code(), Some(0));
    let run = &report(&out)["result"]["run"];
    assert_eq!(run["deterministic"], true);
    assert_eq!(run["matches_target"], true);
}

#[test]
fn builtin_report_can_be_fed_back_to_run() {
    let path = scratch("sigma_z_report.json");
    let out = locclab(&["protocol", "builtin", "--name", "one_round_sigma_z"]);
    std::fs::write(&path, &out.stdout).unwrap();
    let out = locclab(&["protocol", "validate", "--file", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn unknown_builtin_is_a_usage_error() {
    let out = locclab(&["protocol", "builtin", "--name", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(report(&out)["error"].as_str().unwrap().contains("sec4_threeround"));
}

#[test]
fn usage_errors_exit_two_with_a_json_report() {
    for args in [
        &["frobnicate"][..],
        &["sep", "feasibility", "--initial", "2,3", "--target", "2,3"],
        &["decomp", "verify", "--params", "1,2,3,-4"],
        &["--seed", "abc", "decomp", "verify", "--params", "1,2,3,4"],
        &["--tol", "-1", "decomp", "verify", "--params", "1,2,3,4"],
        &["sep", "boundary", "--target", "1,3", "--alpha1p", "2"],
    ] {
        let out = locclab(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(report(&out)["status"], "usage_error", "{args:?}");
    }
}

#[test]
fn reports_are_byte_stable() {
    let args = ["--seed", "7", "symmetry", "sample", "--family", "W:3", "--count", "5"];
    let a = locclab(&args);
    let b = locclab(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(!String::from_utf8_lossy(&a.stdout).contains("wall_time"));
}

#[test]
fn timing_flag_adds_wall_time() {
    let out = locclab(&["--timing", "state", "build", "--spec", "GHZ:3"]);
    assert!(report(&out)["wall_time_s"].is_number());
}

#[test]
fn seed_comes_from_the_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_locclab"))
        .args(["symmetry", "sample", "--family", "GHZ:2"])
        .env("LOCCLAB_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(report(&out)["seed"], 42);
}

#[test]
fn digest_covers_file_contents() {
    let path = scratch("h.json");
    let p = path.to_str().unwrap();
    let digest = |body: &str| {
        std::fs::write(&path, body).unwrap();
        let out = locclab(&["symmetry", "solve", "--family", "GHZ:2", "--H", p, "--required", "1"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        report(&out)["inputs_digest"].as_str().unwrap().to_string()
    };
    let a = digest("[[[2,1],[1,3]],[[1,0],[0,1]]]");
    let b = digest("[[[2,1],[1,4]],[[1,0],[0,1]]]");
    assert_ne!(a, b);
}

#[test]
fn classify_reports_the_family_type() {
    let out = locclab(&["state", "classify", "--params", "2,3,5,7"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["result"]["kind"], "TypeIII");
    let out = locclab(&["state", "classify", "--params", "2,2,2,2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ghz_stabilizer_verifies() {
    let op = r#"{"factors": [[[2,0],[0,0.5]], [[0.5,0],[0,2]]]}"#;
    let out = locclab(&["symmetry", "verify", "--op", op, "--state", "GHZ:2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = locclab(&["symmetry", "verify", "--op", "MA3:2,3,5,7", "--state", "A3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn random_ghz_state_is_not_isolated() {
    let g = "[[[2,0.5],[0.5,1]], [[1,0.2],[0.2,3]], [[1.5,-0.3],[-0.3,1]]]";
    let out = locclab(&["isolation", "check", "--family", "GHZ:3", "--G", g]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(&out)["result"]["verdict"]["weakly_isolated"], false);
}

#[test]
fn fourqubit_case_is_isolated() {
    let out = locclab(&["isolation", "fourqubit", "--case", "Labc2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn theorem5_witness_with_few_probes() {
    let out = locclab(&["isolation", "theorem5", "--n", "4", "--d", "2", "--r", "0.5", "--probes", "50"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(&out)["result"]["report"]["pass"], true);
}

#[test]
fn certificate_with_identity_symmetry_checks_the_trivial_map() {
    let cert = r#"{"probabilities": [1.0], "symmetries": [{"factors": [
        [[1,0,0],[0,1,0],[0,0,1]], [[1,0,0],[0,1,0],[0,0,1]], [[1,0,0],[0,1,0],[0,0,1]]]}]}"#;
    let path = scratch("cert.json");
    std::fs::write(&path, cert).unwrap();
    let p = path.to_str().unwrap();
    let op = "MA3:2,3,5,7";
    let out = locclab(&["sep", "verify-cert", "--file", p, "--g", op, "--h", op, "--seed", "A3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = locclab(&["sep", "verify-cert", "--file", p, "--g", op, "--h", "MA3:2,1,5,1", "--seed", "A3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sep_report_forbids_type_three_to_type_two() {
    let out = locclab(&["sep", "report", "--initial", "2,3,5,7", "--target", "2,1,3,1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["result"]["forward"]["verdict"], "ForbiddenBySep");
}

#[test]
fn suites_pass_with_reduced_draws() {
    for name in ["paper-identities", "isolation-survey", "sep-scan", "decomp-sweep"] {
        let out = locclab(&["suite", name, "--draws", "3"]);
        let r = report(&out);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", r["result"]["cases"]);
        let ids: Vec<&str> = r["result"]["cases"].as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }
}

#[test]
fn help_exits_zero() {
    let out = locclab(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("suite"));
}
