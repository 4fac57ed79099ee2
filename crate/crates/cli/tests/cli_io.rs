//! Black-box tests of the installed binary: flag handling, config file
//! precedence, output layout, and the self-test hook.

use std::path::Path;
use std::process::{Command, Output};

fn rotbench(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotbench"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary should launch")
}

fn read_csv(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("missing {name}: {e}"))
}

#[test]
fn wahba_writes_one_csv_per_representation_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotbench(
        &["wahba", "--replicates", "2", "--n-points", "8", "--max-iters", "6"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("wahba/so3:"), "stdout was: {stdout}");

    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec![
            "wahba_axis-angle.csv",
            "wahba_euler.csv",
            "wahba_flat.csv",
            "wahba_quat-attitude.csv",
            "wahba_quat-naive.csv",
            "wahba_so3.csv",
            "wahba_summary.json",
        ]
    );

    let csv = read_csv(dir.path(), "wahba_so3.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replicate,representation,iteration,error_or_cost,wall_time_s,converged"
    );
    assert_eq!(csv.lines().count(), 1 + 2 * 6);
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&first[..3], &["0", "so3", "1"]);
    assert_eq!(first[4], "0"); // untimed runs record zero wall time

    let summary: serde_json::Value =
        serde_json::from_str(&read_csv(dir.path(), "wahba_summary.json")).unwrap();
    let reports = summary.as_array().unwrap();
    assert_eq!(reports.len(), 6);
    for report in reports {
        assert_eq!(report["scenario"], "wahba");
        assert_eq!(report["replicates"], 2);
        assert!(report.get("traces").is_none(), "traces must not be serialized");
        assert_eq!(report["percentiles"]["median"].as_array().unwrap().len(), 7);
    }
}

#[test]
fn repr_flag_filters_and_rejects_unknown_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotbench(
        &["wahba", "--replicates", "1", "--n-points", "6", "--max-iters", "4", "--repr", "so3,flat"],
        dir.path(),
    );
    assert!(out.status.success());
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, vec!["wahba_flat.csv", "wahba_so3.csv", "wahba_summary.json"]);

    let bad = rotbench(
        &["wahba", "--replicates", "1", "--repr", "quaternions"],
        dir.path(),
    );
    assert!(!bad.status.success());
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert!(stderr.contains("unknown representation 'quaternions'"), "stderr: {stderr}");
}

#[test]
fn config_file_is_honored_and_flags_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bench.toml");
    std::fs::write(
        &config_path,
        "[wahba]\nreplicates = 3\nn_points = 9\nmax_iters = 5\nseed = 11\n",
    )
    .unwrap();

    let out_dir = tempfile::tempdir().unwrap();
    let out = rotbench(
        &[
            "wahba",
            "--config",
            config_path.to_str().unwrap(),
            "--max-iters",
            "4",
            "--repr",
            "euler",
        ],
        out_dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // replicates and seed come from the file, max_iters from the flag.
    let csv = read_csv(out_dir.path(), "wahba_euler.csv");
    assert_eq!(csv.lines().count(), 1 + 3 * 4);
    let summary: serde_json::Value =
        serde_json::from_str(&read_csv(out_dir.path(), "wahba_summary.json")).unwrap();
    assert_eq!(summary[0]["seed"], 11);
    assert_eq!(summary[0]["max_iters"], 4);

    let bad_config = dir.path().join("typo.toml");
    std::fs::write(&bad_config, "[wahba]\nreplcates = 3\n").unwrap();
    let bad = rotbench(
        &["wahba", "--config", bad_config.to_str().unwrap()],
        out_dir.path(),
    );
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("replcates"));
}

#[test]
fn timings_flag_records_wall_times() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotbench(
        &[
            "wahba",
            "--replicates",
            "2",
            "--n-points",
            "6",
            "--max-iters",
            "4",
            "--repr",
            "so3",
            "--timings",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&read_csv(dir.path(), "wahba_summary.json")).unwrap();
    assert!(summary[0]["total_wall_time_s"].as_f64().unwrap() > 0.0);
    let per_rep = summary[0]["replicate_wall_times_s"].as_array().unwrap();
    assert_eq!(per_rep.len(), 2);
    assert!(per_rep.iter().all(|v| v.as_f64().unwrap() > 0.0));
}

#[test]
fn ilqr_subcommands_accept_shared_flags() {
    let dir = tempfile::tempdir().unwrap();
    let frame = rotbench(
        &[
            "frame-ilqr",
            "--replicates",
            "1",
            "--horizon",
            "10",
            "--max-iters",
            "3",
            "--repr",
            "so3",
        ],
        dir.path(),
    );
    assert!(frame.status.success(), "{}", String::from_utf8_lossy(&frame.stderr));
    assert!(dir.path().join("frame-ilqr_so3.csv").exists());
    assert!(dir.path().join("frame-ilqr_summary.json").exists());

    let quad = rotbench(
        &[
            "quad-ilqr",
            "--replicates",
            "1",
            "--horizon",
            "12",
            "--max-iters",
            "3",
            "--repr",
            "quat-attitude",
        ],
        dir.path(),
    );
    assert!(quad.status.success(), "{}", String::from_utf8_lossy(&quad.stderr));
    let csv = read_csv(dir.path(), "quad-ilqr_quat-attitude.csv");
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn selftest_passes_and_injection_hook_fails_it() {
    let ok = Command::new(env!("CARGO_BIN_EXE_rotbench"))
        .arg("selftest")
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("checks passed"), "stdout: {stdout}");

    let injected = Command::new(env!("CARGO_BIN_EXE_rotbench"))
        .arg("selftest")
        .env("ROTBENCH_SELFTEST_INJECT", "1")
        .output()
        .unwrap();
    assert!(!injected.status.success());
    assert!(String::from_utf8_lossy(&injected.stdout).contains("FAILED"));
}
