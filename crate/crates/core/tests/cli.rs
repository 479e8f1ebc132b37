//! End-to-end runs of the binary against the bundled manifests.

use std::path::PathBuf;
use std::process::{Command, Output};

use foliation_poisson::cli::ReportDocument;

fn manifest(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../manifests")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foliation-poisson"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_manifest(name: &str, extra: &[&str]) -> Output {
    let path = manifest(name);
    let mut args = vec!["run", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn passing_manifests_exit_zero() {
    for name in [
        "r4_example.json",
        "dirac_canonical.json",
        "dirac_variable.json",
        "x1dx2_unimodular.json",
        "dx3_r3.json",
    ] {
        let o = run_manifest(name, &["--format", "text"]);
        assert_eq!(o.status.code(), Some(0), "{name}:\n{}", stdout(&o));
        assert!(stdout(&o).ends_with("overall: PASS\n"), "{name}");
    }
}

#[test]
fn negative_controls_exit_two() {
    for name in [
        "negative/contact.json",
        "negative/jacobi_fail.json",
        "negative/unimodular_h0.json",
    ] {
        let o = run_manifest(name, &["--format", "text"]);
        assert_eq!(o.status.code(), Some(2), "{name}:\n{}", stdout(&o));
        assert!(stdout(&o).contains("overall: FAIL"));
    }
}

#[test]
fn undefined_name_is_a_located_config_error() {
    let o = run_manifest("negative/undefined_two_form.json", &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("/tasks/3"), "{err}");
    assert!(err.contains("omega2"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn malformed_manifests_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("not json", r#"{"coordinates": ["x1"#),
        (
            "unknown task",
            r#"{"coordinates":["x1"],"box":{"x1":[0,1]},"tasks":[{"task":"frobnicate"}]}"#,
        ),
        (
            "unknown key",
            r#"{"coordinates":["x1"],"box":{"x1":[0,1]},"tasks":[],"extra":1}"#,
        ),
        (
            "degree mixture",
            r#"{"coordinates":["x1","x2"],"box":{"x1":[0,1],"x2":[0,1]},"definitions":{"a":"dx1 + dx1^dx2"},"tasks":[]}"#,
        ),
    ];
    for (label, text) in cases {
        let path = dir.path().join("m.json");
        std::fs::write(&path, text).unwrap();
        let o = run(&["run", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{label}");
    }
    let o = run(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn json_report_round_trips_through_render() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = run_manifest("x1dx2_unimodular.json", &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let doc = ReportDocument::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc.render_text(), text);
    let rendered = run(&["render", out.to_str().unwrap()]);
    assert_eq!(rendered.status.code(), Some(0));
    assert_eq!(stdout(&rendered), text);
}

#[test]
fn overrides_are_recorded() {
    let o = run_manifest(
        "dirac_canonical.json",
        &[
            "--format",
            "json",
            "--seed",
            "7",
            "--points",
            "9",
            "--tol-abs",
            "1e-10",
            "--tol-rel",
            "1e-8",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let doc = ReportDocument::from_json(&stdout(&o)).unwrap();
    assert_eq!(doc.sampling.seed, 7);
    assert_eq!(doc.sampling.points, 9);
    assert_eq!(doc.sampling.tol_abs, 1e-10);
    assert_eq!(doc.sampling.tol_rel, 1e-8);
    assert!(doc.tasks.iter().all(|t| t.points_used == 9));
    assert!(doc.elapsed_ms.is_none());
}

#[test]
fn timing_is_opt_in() {
    let o = run_manifest("dirac_canonical.json", &["--format", "json", "--timing"]);
    let doc = ReportDocument::from_json(&stdout(&o)).unwrap();
    assert!(doc.elapsed_ms.is_some());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = run_manifest("r4_example.json", &["--format", "json"]);
    let b = run_manifest("r4_example.json", &["--format", "json"]);
    assert_eq!(a.stdout, b.stdout);
    let c = run_manifest("r4_example.json", &["--format", "json", "--seed", "43"]);
    assert_ne!(a.stdout, c.stdout);
}
