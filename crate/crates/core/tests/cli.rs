use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wishart-minors"))
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn identity_csv(dir: &Path, r: usize) -> PathBuf {
    let body: String = (0..r)
        .map(|i| {
            (0..r)
                .map(|j| if i == j { "1" } else { "0" })
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    write(dir, &format!("id{r}.csv"), &body)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn variance_identity_tetrad() {
    let dir = tempfile::tempdir().unwrap();
    let id4 = identity_csv(dir.path(), 4);
    let out = run(&["variance", "--sigma", id4.to_str().unwrap(), "--n", "5", "--rows", "1,2", "--cols", "3,4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("variance = 40\n"), "{text}");
}

#[test]
fn verify_diagonal_entry_passes() {
    let dir = tempfile::tempdir().unwrap();
    let id2 = identity_csv(dir.path(), 2);
    let out = run(&[
        "verify", "--sigma", id2.to_str().unwrap(), "--n", "10", "--rows", "1", "--cols", "1",
        "--reps", "100000", "--json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["verdict"], "PASS");
    assert_eq!(v["formula_variance"], 20.0);
}

#[test]
fn duplicate_index_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let id4 = identity_csv(dir.path(), 4);
    let out = run(&["variance", "--sigma", id4.to_str().unwrap(), "--n", "5", "--rows", "1,1", "--cols", "2,3"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("duplicate"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let asym = write(dir.path(), "a.csv", "1,0.9\n0.8,1\n");
    let out = run(&["mean", "--sigma", asym.to_str().unwrap(), "--n", "5", "--rows", "1", "--cols", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let id2 = identity_csv(dir.path(), 2);
    for args in [
        vec!["mean", "--sigma", id2.to_str().unwrap(), "--n", "5.5", "--rows", "1", "--cols", "2"],
        vec!["mean", "--sigma", id2.to_str().unwrap(), "--n", "0", "--rows", "1", "--cols", "2"],
        vec!["mean", "--sigma", id2.to_str().unwrap(), "--n", "3", "--rows", "3", "--cols", "2"],
        vec!["mean", "--sigma", id2.to_str().unwrap(), "--n", "3", "--rows", "1,2", "--cols", "2"],
        vec!["mean", "--sigma", "/nonexistent.csv", "--n", "3", "--rows", "1", "--cols", "2"],
    ] {
        assert_eq!(run(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn json_report_recomposes() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = write(
        dir.path(),
        "s.json",
        r#"{"matrix": [[2.0, 0.3, 0.5, -0.2], [0.3, 1.5, 0.1, 0.4], [0.5, 0.1, 1.2, 0.2], [-0.2, 0.4, 0.2, 1.8]]}"#,
    );
    let out = run(&["variance", "--sigma", sigma.to_str().unwrap(), "--n", "6", "--rows", "1,2", "--cols", "3,4", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    for key in ["mean", "variance", "term1", "term2", "second_moment"] {
        assert!(v[key].is_f64(), "missing {key}");
    }
    let term2 = v["term2"].as_f64().unwrap();
    let sum: f64 = v["trace_terms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["contribution"].as_f64().unwrap())
        .sum();
    assert!((sum - term2).abs() <= 1e-12 * term2.abs().max(1.0));
    // 650.772 − 6.6² from an independent exact expansion
    assert!((v["variance"].as_f64().unwrap() - 607.212).abs() < 1e-9);
}

#[test]
fn one_based_indices_in_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "s.csv", "4,1\n1,9\n");
    let json = write(dir.path(), "s.json", r#"{"matrix": [[4, 1], [1, 9]]}"#);
    for path in [csv, json] {
        let out = run(&["mean", "--sigma", path.to_str().unwrap(), "--n", "3", "--rows", "1", "--cols", "1", "--json"]);
        assert_eq!(json_of(&out)["mean"], 12.0);
        assert_eq!(json_of(&out)["rows"], serde_json::json!([1]));
    }
}

#[test]
fn oracle_command() {
    let dir = tempfile::tempdir().unwrap();
    let id4 = identity_csv(dir.path(), 4);
    let out = run(&["oracle", "--sigma", id4.to_str().unwrap(), "--n", "5", "--rows", "1,2", "--cols", "3,4", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["wick_second_moment"], 40.0);
    assert_eq!(v["verdict"], "AGREE");

    let id6 = identity_csv(dir.path(), 6);
    let out = run(&["oracle", "--sigma", id6.to_str().unwrap(), "--n", "7", "--rows", "1,2,3", "--cols", "4,5,6"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8(out.stderr).unwrap().contains("n*m"));
}

#[test]
fn calibrate_command() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = write(
        dir.path(),
        "s.csv",
        "2.0,0.3,0.5,-0.2\n0.3,1.5,0.1,0.4\n0.5,0.1,1.2,0.2\n-0.2,0.4,0.2,1.8\n",
    );
    let out = run(&["calibrate", "--sigma", sigma.to_str().unwrap(), "--n", "6", "--rows", "1,2", "--cols", "3,4", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&out)["selected"], "inverse_block_ji");

    let id4 = identity_csv(dir.path(), 4);
    let out = run(&["calibrate", "--sigma", id4.to_str().unwrap(), "--n", "6", "--rows", "1,2", "--cols", "3,4"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("asymmetric"));
}

#[test]
fn verify_fails_on_wrong_truth_band() {
    // 2 reps with a tiny band cannot cover the truth.
    let dir = tempfile::tempdir().unwrap();
    let id2 = identity_csv(dir.path(), 2);
    let out = run(&[
        "verify", "--sigma", id2.to_str().unwrap(), "--n", "10", "--rows", "1", "--cols", "2",
        "--reps", "2", "--tolerance-sigmas", "0.000001", "--json",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json_of(&out)["verdict"], "FAIL");
}
