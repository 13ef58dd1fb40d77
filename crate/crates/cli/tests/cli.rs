use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use guas_core::builtins::mason_pair;
use guas_core::problem::ProblemFile;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_guas-cert"));
    c.env_remove("GUAS_CERT_THREADS");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn schema_validator() -> jsonschema::Validator {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/verdict.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

fn assert_valid(v: &jsonschema::Validator, instance: &Value) {
    let errors: Vec<String> = v.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}\n{instance:#}");
}

#[test]
fn mason_fixture_matches_builtin_bit_for_bit() {
    let on_disk = ProblemFile::load(fixture("mason.json")).unwrap();
    let built = ProblemFile::from_pair(&mason_pair(), None);
    for (a, b) in [(&on_disk.b0, &built.b0), (&on_disk.b1, &built.b1)] {
        for (ra, rb) in a.iter().zip(b) {
            for (x, y) in ra.iter().zip(rb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
    let (pa, pb) = (on_disk.p.unwrap(), built.p.unwrap());
    for (ra, rb) in pa.iter().zip(&pb) {
        for (x, y) in ra.iter().zip(rb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn exit_codes_follow_conclusions() {
    let mason = fixture("mason.json");
    let o = run(&["analyze", mason.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("GUAS_trivial_kernel"));

    let neg = fixture("kdeux_ab_neg.json");
    let o = run(&["analyze", neg.to_str().unwrap(), "--evidence", "never"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("NOT_GUAS_constant_input"));
    assert!(stdout(&o).contains("λ* = 0.5"));

    let o = run(&["analyze", fixture("nonhurwitz.json").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not Hurwitz"));
}

#[test]
fn inconclusive_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("torus.json");
    assert_eq!(code(&run(&["example", "torus", "--write", path.to_str().unwrap()])), 0);
    let o = run(&["analyze", path.to_str().unwrap(), "--evidence", "never", "--g-resolution", "6"]);
    assert_eq!(code(&o), 2, "{}", stdout(&o));
    assert!(stdout(&o).contains("INCONCLUSIVE"));
}

#[test]
fn usage_and_io_errors_exit_with_four() {
    assert_eq!(code(&run(&["analyze", "/definitely/not/here.json"])), 4);
    assert_eq!(code(&run(&["frobnicate"])), 4);
    assert_eq!(code(&run(&["example", "nope"])), 4);
    assert_eq!(code(&run(&["example", "shared-output", "--family", "7"])), 4);
    assert_eq!(code(&run(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"B0\": [[1, 2], [3]], \"B1\": [[1, 0], [0, 1]]}").unwrap();
    assert_eq!(code(&run(&["analyze", bad.to_str().unwrap()])), 4);

    let neg = fixture("kdeux_ab_neg.json");
    let o = run(&["simulate", neg.to_str().unwrap(), "--signal", "sometimes", "--x0", "1,0"]);
    assert_eq!(code(&o), 4);

    let o = bin()
        .env("GUAS_CERT_THREADS", "many")
        .args(["example", "mason"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn thread_count_does_not_change_the_verdict() {
    let neg = fixture("kdeux_ab_neg.json");
    let args = ["analyze", neg.to_str().unwrap(), "--json", "--evidence", "never"];
    let one = bin().env("GUAS_CERT_THREADS", "1").args(args).output().unwrap();
    let many = bin().env("GUAS_CERT_THREADS", "4").args(args).output().unwrap();
    assert_eq!(code(&one), 1);
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn json_output_satisfies_schema() {
    let validator = schema_validator();
    let cases: Vec<Vec<&str>> = vec![
        vec!["example", "mason", "--json"],
        vec!["example", "hurwitz", "--json"],
        vec!["example", "shared-output", "--json"],
        vec!["example", "shared-output", "--family", "1", "--json"],
        vec!["example", "kdeux", "--a", "1", "--b", "-1", "--json", "--evidence", "always", "--T", "2", "--n-random", "2"],
        vec!["example", "kdeux", "--a", "2", "--b", "3", "--json"],
        vec!["example", "torus", "--json", "--g-resolution", "6", "--T", "2", "--n-random", "2"],
    ];
    for args in cases {
        let o = run(&args);
        assert!(code(&o) <= 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["expected"]["conclusion"], v["verdict"]["conclusion"], "{args:?}");
        assert_valid(&validator, &v["verdict"]);
    }
    let o = run(&["analyze", fixture("mason.json").to_str().unwrap(), "--json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["margins"]["rank_margin"].is_null());
    assert_valid(&validator, &v);

    let mut broken = v.clone();
    broken["conclusion"] = Value::from("PROBABLY_FINE");
    assert!(!validator.is_valid(&broken));
}

#[test]
fn mason_example_reports_the_touching_ellipses() {
    let o = run(&["example", "mason"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("no strict common quadratic Lyapunov function"), "{s}");
    assert!(s.contains("0.17157") && s.contains("5.82843") && s.contains("197.99495"), "{s}");
}

#[test]
fn simulate_writes_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let neg = fixture("kdeux_ab_neg.json");
    let o = run(&[
        "simulate",
        neg.to_str().unwrap(),
        "--signal",
        "relaxed:1=0.5",
        "--x0",
        "0.7071067811865475,-0.7071067811865475",
        "--T",
        "2",
        "--dt",
        "0.01",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x_1,x_2,norm,y_1,lambda");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 201);
    for r in &rows {
        assert!((r[3] - 1.0).abs() < 1e-9);
        assert!(r[4].abs() < 1e-9);
    }
    assert!(String::from_utf8_lossy(&o.stderr).contains("final norm ratio"));

    let o = run(&[
        "simulate",
        neg.to_str().unwrap(),
        "--signal",
        "binary:1=0,1=1",
        "--x0",
        "1,0,0",
        "--T",
        "4",
        "--dt",
        "0.01",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next().unwrap(), "t,x_1,x_2,x_3,norm");
    assert_eq!(stdout(&o).lines().count(), 402);

    let o = run(&["simulate", neg.to_str().unwrap(), "--signal", "worst", "--x0", "1,0,0,0", "--T", "1"]);
    assert_eq!(code(&o), 3);
}
