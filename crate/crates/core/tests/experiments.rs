use hdspa::experiments::{
    plot_table, read_plot_data, results_from_csv, results_to_csv, run_experiment, sha256_hex, ExperimentSpec, Mode,
    PlotKind, ResultRecord,
};
use std::path::Path;

const MODEL: &str = "mu = \"unit*1.0\"\nsigma = \"identity\"\n";

fn write_spec(dir: &Path, mode: &str, extra: &str) -> ExperimentSpec {
    std::fs::write(dir.join("model.toml"), MODEL).unwrap();
    let text = format!(
        "model = \"model.toml\"\nmode = \"{mode}\"\nd_grid = [1, 2]\nn_grid = [100, 200, 400]\nseed = 7\noutput_dir = \"out\"\n{extra}"
    );
    let path = dir.join("spec.toml");
    std::fs::write(&path, text).unwrap();
    let mut spec = ExperimentSpec::from_file(&path).unwrap();
    spec.output_dir = dir.join("out");
    spec
}

#[test]
fn identical_specs_give_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = write_spec(a.path(), "error_scaling", "");
    let sb = write_spec(b.path(), "error_scaling", "");
    run_experiment(&sa).unwrap();
    run_experiment(&sb).unwrap();
    for name in ["error_scaling.csv", "error_scaling_plot.dat"] {
        let x = std::fs::read(a.path().join("out").join(name)).unwrap();
        let y = std::fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn manifest_lists_every_file_with_hash() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "clt_study", "a_points = { points = [[0.0], [0.5], [1.0]] }\n");
    let out = run_experiment(&spec).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    let entries = manifest["files"].as_array().unwrap();
    let listed: Vec<&str> = entries.iter().map(|e| e["path"].as_str().unwrap()).collect();
    for file in &out.files {
        let name = file.file_name().unwrap().to_str().unwrap();
        if name == "manifest.json" {
            continue;
        }
        assert!(listed.contains(&name), "{name} missing");
    }
    for e in entries {
        let bytes = std::fs::read(dir.path().join("out").join(e["path"].as_str().unwrap())).unwrap();
        assert_eq!(e["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
    assert_eq!(manifest["mode"], "clt_study");
    // explicit points only match d = 1
    assert!(out.records.iter().all(|r| r.d == 1));
    assert_eq!(out.records.len(), 9);
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "correction_study", "");
    let out = run_experiment(&spec).unwrap();
    assert!(out.records.iter().all(|r| r.is_ok()), "{:?}", out.records.iter().map(|r| &r.status).collect::<Vec<_>>());
    let text = std::fs::read_to_string(dir.path().join("out/correction_study.csv")).unwrap();
    let back = results_from_csv(&text).unwrap();
    assert_eq!(back, out.records);
    let plot = read_plot_data(&plot_table(&out.records, PlotKind::Correction)).unwrap();
    for (row, rec) in plot.iter().zip(&out.records) {
        assert_eq!(row.0, rec.eps);
        assert_eq!(Some(row.1), rec.i_minus_one);
        assert_eq!(row.2, rec.d);
    }
}

#[test]
fn plot_schema_and_empty_table() {
    assert_eq!(plot_table(&[], PlotKind::ErrorScaling), "eps rel_err d\n");
    let mut r = ResultRecord::empty(2, 400);
    r.rel_err = Some(1.0 / 3.0);
    let rows = read_plot_data(&plot_table(&[r.clone()], PlotKind::ErrorScaling)).unwrap();
    assert_eq!(rows, vec![(0.01, 1.0 / 3.0, 2)]);
    assert_eq!(results_from_csv(&results_to_csv(&[r.clone()])).unwrap(), vec![r]);
}

#[test]
fn assumptions_mode_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = write_spec(dir.path(), "assumptions", "samples = 200\n");
    spec.n_grid = vec![200];
    let out = run_experiment(&spec).unwrap();
    assert_eq!(out.assumptions.len(), 2);
    for row in &out.assumptions {
        let rep = row.report.as_ref().unwrap();
        assert_eq!(rep.magnitude_violations, 0);
        assert!(rep.delta_arg > 0.0 && rep.delta_mod > 0.0);
    }
    let text = std::fs::read_to_string(dir.path().join("out/assumptions.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn bad_specs_are_rejected() {
    assert!(ExperimentSpec::from_toml("mode = \"error_scaling\"\nmodel = \"m.toml\"\nbogus = 1\n").is_err());
    let dir = tempfile::tempdir().unwrap();
    let mut spec = write_spec(dir.path(), "correction_study", "");
    spec.d_grid = vec![1, 4];
    assert!(run_experiment(&spec).is_err());
    spec.d_grid = vec![];
    assert!(spec.validate().is_err());
    assert_eq!("clt".parse::<Mode>().unwrap(), Mode::CltStudy);
}

#[test]
fn failing_rows_do_not_abort() {
    let dir = tempfile::tempdir().unwrap();
    // the model file fixes d = 2, so every d = 1 row fails
    std::fs::write(dir.path().join("fixed.toml"), "mu = [1.0, 0.0]\n").unwrap();
    let text = "model = \"fixed.toml\"\nmode = \"error_scaling\"\nd_grid = [1, 2]\nn_grid = [100]\n";
    std::fs::write(dir.path().join("spec.toml"), text).unwrap();
    let mut spec = ExperimentSpec::from_file(&dir.path().join("spec.toml")).unwrap();
    spec.output_dir = dir.path().join("out");
    let out = run_experiment(&spec).unwrap();
    assert!(out.records.iter().any(|r| r.d == 1 && !r.is_ok()));
    assert!(out.records.iter().any(|r| r.d == 2 && r.is_ok()));
}
