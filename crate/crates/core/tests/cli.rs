use std::path::Path;

use xcavity::cli::{error_json, main_with_args, run, validate, FileConfig, RunConfig, Task, CSV_HEADER_PREFIX};
use xcavity::Error;

fn cli(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("xcavity").chain(args.iter().copied()))
}

fn out_arg(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// Parses a CSV artifact: checks the version line, returns header and rows.
fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with(CSV_HEADER_PREFIX));
    let header = lines.next().unwrap().split(',').map(String::from).collect::<Vec<_>>();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert!(rows.iter().all(|r| r.len() == header.len()));
    (header, rows)
}

#[test]
fn hamiltonian_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    assert_eq!(cli(&["hamiltonian", "--dv", "2.8", "--out", &out_arg(&out)]), 0);
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["row", "col", "re", "im", "abs"]);
    assert_eq!(rows.len(), 100);
    let abs = |j: usize, l: usize| -> f64 { rows[(j - 1) * 10 + l - 1][4].parse().unwrap() };
    for j in 1..=10 {
        for l in 1..=10 {
            assert_eq!(abs(j, l), abs(l, j));
        }
    }
    let (rh, rr) = read_csv(&dir.path().join("h.rabi.csv"));
    assert_eq!(rh, ["layer", "re", "im", "abs"]);
    assert_eq!(rr.len(), 10);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for task in ["hamiltonian", "eigen", "reflectivity", "winding"] {
        let (a, b) = (dir.path().join(format!("{task}-a.csv")), dir.path().join(format!("{task}-b.csv")));
        assert_eq!(cli(&[task, "--out", &out_arg(&a)]), 0);
        assert_eq!(cli(&[task, "--out", &out_arg(&b), "--threads", "2"]), 0);
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{task}");
    }
}

#[test]
fn every_task_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[sweep]\ndv_points = 4\ndw_points = 3\ndetuning_points = 201\nn_k = 256\n").unwrap();
    let cases: [(&str, &[&str]); 7] = [
        ("greens-dump", &["field.csv"]),
        ("hamiltonian", &["rabi.csv"]),
        ("eigen", &["weights.csv"]),
        ("winding", &[]),
        ("phase-diagram", &[]),
        ("reflectivity", &["features.json"]),
        ("dv-sweep", &[]),
    ];
    for (task, extra) in cases {
        let out = dir.path().join(format!("{task}.csv"));
        assert_eq!(cli(&[task, "--config", &out_arg(&cfg), "--out", &out_arg(&out)]), 0, "{task}");
        read_csv(&out);
        for e in extra {
            assert!(dir.path().join(format!("{task}.{e}")).exists(), "{task}.{e}");
        }
        let js = dir.path().join(format!("{task}.json"));
        assert_eq!(cli(&[task, "--config", &out_arg(&cfg), "--format", "json", "--out", &out_arg(&js)]), 0);
        let _: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&js).unwrap()).unwrap();
    }
    let (_, rows) = read_csv(&dir.path().join("phase-diagram.csv"));
    assert_eq!(rows.len(), 12);
    let (_, rows) = read_csv(&dir.path().join("dv-sweep.csv"));
    assert_eq!(rows.len(), 40);
}

#[test]
fn winding_at_canonical_geometries() {
    let dir = tempfile::tempdir().unwrap();
    for (dv, w) in [("4.9", "1"), ("2.8", "0")] {
        let out = dir.path().join(format!("w{dv}.csv"));
        assert_eq!(cli(&["winding", "--dv", dv, "--out", &out_arg(&out)]), 0);
        let (_, rows) = read_csv(&out);
        assert_eq!(rows[0][4], w);
        assert_eq!(rows[0][5], "ok");
    }
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[stack]\nd_v = 3.0\n").unwrap();
    assert_eq!(cli(&["hamiltonian", "--config", &out_arg(&bad)]), 2);
    std::fs::write(&bad, "[stack]\nspacer_material = \"Unobtainium\"\n").unwrap();
    assert_eq!(cli(&["hamiltonian", "--config", &out_arg(&bad)]), 2);
    assert_eq!(cli(&["no-such-task"]), 2);
    assert_eq!(cli(&["hamiltonian", "--dv", "-1"]), 2);
    assert_eq!(cli(&["--help"]), 0);
}

#[test]
fn invalid_value_names_the_field() {
    let file = FileConfig::from_toml_str("[stack]\nd_v_nm = -2.0\n").unwrap();
    let err = run(&RunConfig::new(Task::Hamiltonian, file)).unwrap_err();
    let report: serde_json::Value = serde_json::from_str(&error_json(&err)).unwrap();
    assert_eq!(report["error"], "validation");
    assert_eq!(report["field"], "d_v_nm");
}

#[test]
fn unknown_key_is_reported_in_the_message() {
    let err = FileConfig::from_toml_str("[probe]\nangle = 2.4\n").unwrap_err();
    assert!(matches!(err, Error::Parse { .. }));
    let report: serde_json::Value = serde_json::from_str(&error_json(&err)).unwrap();
    assert!(report["message"].as_str().unwrap().contains("angle"));
}

#[test]
fn io_failure_exits_with_4() {
    assert_eq!(cli(&["hamiltonian", "--out", "/nonexistent-dir/h.csv"]), 4);
    assert_eq!(cli(&["hamiltonian", "--config", "/nonexistent-dir/run.toml"]), 4);
}

#[test]
fn validate_warns_below_two_nanometres() {
    let mut file = FileConfig::default();
    file.stack.d_v_nm = 1.0;
    let d = validate(&RunConfig::new(Task::Validate, file));
    assert!(d.ok);
    assert!(d.warnings.iter().any(|w| w.field == "stack.d_v_nm"), "{d:?}");

    let d = validate(&RunConfig::new(Task::Validate, FileConfig::default()));
    assert!(d.ok && d.warnings.is_empty() && d.errors.is_empty(), "{d:?}");
}

#[test]
fn validate_reports_missing_materials_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("diag.json");
    assert_eq!(cli(&["validate", "--materials", "/nonexistent.toml", "--out", &out_arg(&out)]), 2);
    let d: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(d["ok"], false);
    assert_eq!(d["errors"][0]["field"], "materials");
}

#[test]
fn relative_materials_path_follows_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let builtin = include_str!("../data/materials.toml");
    std::fs::write(dir.path().join("mats.toml"), builtin).unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "materials = \"mats.toml\"\n").unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(cli(&["hamiltonian", "--config", &out_arg(&cfg), "--out", &out_arg(&a)]), 0);
    assert_eq!(cli(&["hamiltonian", "--out", &out_arg(&b)]), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
