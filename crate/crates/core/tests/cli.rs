use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noisy-tomo"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value_after(text: &str, key: &str) -> f64 {
    let start = text.find(key).unwrap_or_else(|| panic!("`{key}` missing in:\n{text}")) + key.len();
    text[start..]
        .split_whitespace()
        .next()
        .unwrap()
        .trim_end_matches(',')
        .parse()
        .unwrap()
}

const DEPHASED_PLUS_I: &str = r#"{
    "protocol": {"kind": "tetrahedron"},
    "channels": {"kind": "pure_dephasing", "t_over_T2pure": 0.5},
    "state": {"preset": "plus_i"},
    "n": 4000, "trials": 40, "master_seed": 11
}"#;

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn selfcheck_passes() {
    let o = run(&["selfcheck"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.matches("[PASS]").count(), 3, "{text}");
    assert!(!text.contains("[FAIL]"));
}

#[test]
fn protocol_show_prints_rows_and_residual() {
    let o = run(&[
        "protocol",
        "show",
        "cube",
        "--qubits",
        "2",
        "--rotate",
        "1,1,0,0.7853981633974483",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("36 rows"), "{text}");
    assert!(value_after(&text, "unity residual:") < 1e-10);
}

#[test]
fn theory_on_worst_tetrahedron_state_gives_ideal_maximum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "worst.json",
        r#"{"protocol": {"kind": "tetrahedron"}, "state": {"preset": "worst"}, "n": 4000, "trials": 1}"#,
    );
    let o = run(&["theory", &cfg]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!((value_after(&text, "L =") - 1.5).abs() < 0.03, "{text}");
    assert_eq!(value_after(&text, "nu =") as usize, 2);
    assert_eq!(value_after(&text, "nu_H =") as usize, 3);
}

#[test]
fn blochmap_writes_files_and_reports_extrema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let o = run(&["blochmap", "cube", "--channel", "dephasing:t=0.8T2", "--output", &out]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!((value_after(&text, "L_min =") - 4.09).abs() < 0.08, "{text}");
    let csv = fs::read_to_string(dir.path().join("blochmap.csv")).unwrap();
    assert!(csv.starts_with("theta,phi,L\n"));
    assert_eq!(csv.lines().count(), 1 + 59 * 120 + 2);
    let svg = fs::read_to_string(dir.path().join("blochmap.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "one_qubit.json", DEPHASED_PLUS_I);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let oa = bin()
        .args(["simulate", &cfg, "--output", a.to_str().unwrap()])
        .env("NOISY_TOMO_THREADS", "1")
        .output()
        .unwrap();
    let ob = run(&["--threads", "3", "simulate", &cfg, "--output", b.to_str().unwrap()]);
    assert!(oa.status.success() && ob.status.success());
    for name in ["result.json", "trials.csv", "loss_hist.csv", "loss_hist.svg"] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    assert!(a.join("metadata.json").exists());
    let result: serde_json::Value = serde_json::from_slice(&fs::read(a.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["trials"].as_array().unwrap().len(), 40);
    assert!(result.get("created_unix").is_none());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "bad.json",
        &DEPHASED_PLUS_I.replace("\"n\": 4000", "\"n\": \"many\""),
    );
    let o = run(&["theory", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`n`"));

    let o = run(&["theory", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["blochmap", "cube", "--channel", "sideways:t=1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn channel_problems_map_to_exit_codes() {
    // A Kraus set that is not trace preserving is a configuration error.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "leaky.json",
        r#"{
            "protocol": {"kind": "tetrahedron"},
            "channels": {"kind": "kraus", "operators": [[[[1, 0], [0, 0]], [[0, 0], [0.5, 0]]]]},
            "state": {"preset": "zero"}, "n": 100, "trials": 1
        }"#,
    );
    let o = run(&["theory", &cfg]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`channels`"));

    // A bit flip with p = 1/2 erases the y and z Bloch components: incomplete, numerical failure.
    let cfg = write_config(
        dir.path(),
        "flat.json",
        r#"{
            "protocol": {"kind": "tetrahedron"},
            "channels": {"kind": "bit_flip", "p": 0.5},
            "state": {"preset": "zero"}, "n": 100, "trials": 1
        }"#,
    );
    let o = run(&["theory", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
