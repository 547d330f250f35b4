//! End-to-end tests of the `subrec` binary.

use std::path::Path;
use std::process::{Command, Output};

fn subrec(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subrec"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn angles_identical_files_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let basis = "7.0710678118654746e-1,0.0000000000000000e0\n\
                 7.0710678118654746e-1,0.0000000000000000e0\n\
                 0.0000000000000000e0,1.0000000000000000e0\n";
    std::fs::write(dir.path().join("b.csv"), basis).unwrap();
    let out = subrec(&["angles", "b.csv", "b.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("max_sin: 0"), "{text}");
    for line in text.lines().filter(|l| l.starts_with("angle[")) {
        let val: f64 = line.split(": ").nth(1).unwrap().parse().unwrap();
        assert!(val.abs() <= 1e-7, "{line}");
    }
}

#[test]
fn angles_orthogonal_lines_are_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.csv"), "1.0\n0.0\n0.0\n").unwrap();
    std::fs::write(dir.path().join("b.csv"), "0.0\n1.0\n0.0\n").unwrap();
    let out = subrec(&["angles", "a.csv", "b.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("max_sin: 1"), "{}", stdout(&out));
}

#[test]
fn angles_thirty_degree_rotation() {
    let dir = tempfile::tempdir().unwrap();
    let c = (3f64).sqrt() / 2.0;
    std::fs::write(dir.path().join("a.csv"), "1.0\n0.0\n").unwrap();
    std::fs::write(dir.path().join("b.csv"), format!("{c:.16e}\n5.0000000000000000e-1\n"))
        .unwrap();
    let out = subrec(&["angles", "a.csv", "b.csv", "--format", "json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let max_sin = v["max_sin"].as_f64().unwrap();
    assert!((max_sin - 0.5).abs() <= 1e-10, "max_sin {max_sin}");
}

#[test]
fn estimate_round_trip_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let gen = subrec(
        &[
            "generate", "--model", "pca", "--d", "8", "-k", "2", "-n", "40", "-m", "3",
            "--sigma", "1", "--eta", "0.2", "--output", "data.csv", "--seed", "5",
        ],
        dir.path(),
    );
    assert!(gen.status.success(), "{}", stderr(&gen));
    let est = subrec(
        &["estimate", "--input", "data.csv", "-k", "2", "--output", "basis.csv"],
        dir.path(),
    );
    assert!(est.status.success(), "{}", stderr(&est));
    let out = subrec(&["angles", "basis.csv", "basis.csv"], dir.path());
    assert!(out.status.success());
    assert!(stdout(&out).contains("max_sin: 0"), "{}", stdout(&out));
}

#[test]
fn estimate_noiseless_plane_and_json_report() {
    let dir = tempfile::tempdir().unwrap();
    // two users with noiseless means spanning the e1-e2 plane
    let data = "user_id,x_0,x_1,x_2\n\
                0,1.0,0.0,0.0\n\
                0,1.0,0.0,0.0\n\
                0,1.0,0.0,0.0\n\
                1,0.0,2.0,0.0\n\
                1,0.0,2.0,0.0\n\
                1,0.0,2.0,0.0\n";
    std::fs::write(dir.path().join("plane.csv"), data).unwrap();
    let out = subrec(
        &[
            "estimate", "--input", "plane.csv", "-k", "2", "--output", "basis.csv",
            "--format", "json",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert!(v["gap"].as_f64().unwrap() > 0.0);
    assert_eq!(v["users"], 2);
    // the recovered basis must span the e1-e2 plane: every third coordinate 0
    let basis = std::fs::read_to_string(dir.path().join("basis.csv")).unwrap();
    let last_row = basis.lines().nth(2).unwrap();
    for cell in last_row.split(',') {
        let val: f64 = cell.parse().unwrap();
        assert!(val.abs() <= 1e-10, "out-of-plane component {val}");
    }
}

#[test]
fn estimate_warns_on_single_sample_user() {
    let dir = tempfile::tempdir().unwrap();
    let data = "user_id,x_0,x_1\n\
                0,1.0,0.0\n\
                0,1.0,0.1\n\
                7,0.5,0.5\n";
    std::fs::write(dir.path().join("d.csv"), data).unwrap();
    let out = subrec(
        &["estimate", "--input", "d.csv", "-k", "1", "--output", "b.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    // users are indexed in sorted id order; user 7 becomes index 1
    let err = stderr(&out);
    assert!(err.contains("dropping user 1"), "stderr: {err}");
    assert!(stdout(&out).contains("dropped users"), "{}", stdout(&out));
}

#[test]
fn unknown_config_key_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), "# comment\nd = 10\nk = 2\nwat = 1\n").unwrap();
    let out = subrec(&["sweep", "--config", "c.cfg", "--n-grid", "50"], dir.path());
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.starts_with("error:"), "machine-parseable error line, got {err}");
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.cfg"),
        "d = 10\nk = 2\nn = 60\nm = 2\ntrials = 3\nseed = 1\n",
    )
    .unwrap();
    let a = subrec(
        &["simulate", "--config", "c.cfg", "--format", "json"],
        dir.path(),
    );
    assert!(a.status.success(), "{}", stderr(&a));
    let b = subrec(
        &["simulate", "--config", "c.cfg", "--trials", "5", "--format", "json"],
        dir.path(),
    );
    assert!(b.status.success(), "{}", stderr(&b));
    let va: serde_json::Value = serde_json::from_str(stdout(&a).trim()).unwrap();
    let vb: serde_json::Value = serde_json::from_str(stdout(&b).trim()).unwrap();
    assert_eq!(va["trials"], 3);
    assert_eq!(vb["trials"], 5);
}

#[test]
fn sweep_deterministic_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep", "--d", "8", "-k", "2", "--n-grid", "40,80", "--trials", "4",
        "--deterministic", "--output",
    ];
    let a = subrec(&[&args[..], &["a.csv"]].concat(), dir.path());
    assert!(a.status.success(), "{}", stderr(&a));
    let b = subrec(&[&args[..], &["b.csv"]].concat(), dir.path());
    assert!(b.status.success(), "{}", stderr(&b));
    let csv_a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let csv_b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let text = String::from_utf8(csv_a).unwrap();
    assert!(text.starts_with("setting,d,k,n,m,sigma,eta_summary,weights,delta,trials,"));
    assert!(text.ends_with('\n'));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn parse_error_reports_line_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "user_id,x_0,x_1\n0,1.0\n").unwrap();
    let out = subrec(
        &["estimate", "--input", "bad.csv", "-k", "1", "--output", "b.csv"],
        dir.path(),
    );
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn missing_input_is_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = subrec(&["angles", "nope.csv", "also-nope.csv"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"));
}
