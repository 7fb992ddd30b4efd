//! End-to-end runs of the `sdiff` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn sdiff(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdiff"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, v: &Value) {
    fs::write(dir.join(name), serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn two_traps(second: [f64; 2]) -> Value {
    json!({
        "geometry": {"variant": "Disk2D", "radius": 1.0},
        "compartments": [
            {"center": [-0.3, 0.1], "ell": 1.0, "kappa": null, "model": {"model": "ModelI", "c0": 1.0}},
            {"center": second, "ell": 1.0, "kappa": 2.0, "model": {"model": "ModelI", "c0": 0.0}}
        ],
        "D": 1.0,
        "gamma0": 1.0,
        "I0": 0.0,
        "epsilon": 0.05
    })
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn steady2d_writes_coefficients_and_field() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "s.json", &two_traps([0.4, -0.2]));
    let o = sdiff(&["steady2d", "--spec", "s.json", "--out", "out/", "--grid", "21"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("out");
    let coef: Value = serde_json::from_str(&fs::read_to_string(out.join("coefficients.json")).unwrap()).unwrap();
    assert_eq!(coef["A"].as_array().unwrap().len(), 2);
    let field = fs::read_to_string(out.join("field.csv")).unwrap();
    let mut lines = field.lines();
    assert_eq!(lines.next(), Some("x,y,u"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first.len(), 3);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "steady2d");
    assert_eq!(manifest["grid"], 21);
    assert_eq!(manifest["params"]["newton_max_iter"], 100);
}

#[test]
fn overlapping_compartments_are_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "s.json", &two_traps([-0.28, 0.1]));
    let o = sdiff(&["steady2d", "--spec", "s.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("compartments (1, 2)"), "{}", stderr(&o));
}

#[test]
fn model3_newton_failure_reports_history() {
    let tmp = tempfile::tempdir().unwrap();
    let comp = |c: [f64; 2]| {
        json!({"center": c, "ell": 1.0, "kappa": 10.0, "model": {
            "model": "ModelIII", "kinetics": {"type": "Selkov", "a": 0.1, "b": 0.6, "rate": 10.0},
            "K": 2, "w0": [3.0, 0.1]}})
    };
    let spec = json!({
        "geometry": {"variant": "Disk2D", "radius": 1.0},
        "compartments": [comp([-0.4, 0.1]), comp([0.35, -0.2])],
        "D": 1.0, "gamma0": 10.0, "epsilon": 0.05
    });
    write(tmp.path(), "s.json", &spec);
    write(tmp.path(), "p.json", &json!({"newton_max_iter": 1}));
    let o = sdiff(&["steady2d", "--spec", "s.json", "--params", "p.json"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("residual history"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sdiff(&["steady2d", "--no-such-flag"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert_eq!(sdiff(&["frobnicate"], tmp.path()).status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "s.json", &two_traps([0.4, -0.2]));
    for out in ["a", "b"] {
        let o = sdiff(
            &["greens", "--spec", "s.json", "--out", out, "--grid", "15", "--emit-plot-data"],
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["interaction.json", "green_field.csv", "plot_data.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn sweep_runs_every_point_in_parallel() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "s.json", &two_traps([0.4, -0.2]));
    let o = sdiff(
        &["steady2d", "--spec", "s.json", "--sweep", "kappa=1:4:4", "--jobs", "3", "--grid", "9"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("out");
    let index: Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(index["values"], json!([1.0, 2.0, 3.0, 4.0]));
    for i in 0..4 {
        let m: Value =
            serde_json::from_str(&fs::read_to_string(out.join(format!("point_{i:03}/manifest.json"))).unwrap()).unwrap();
        assert_eq!(m["spec"]["compartments"][1]["kappa"], 1.0 + i as f64);
    }
}

#[test]
fn ripen_and_kuramoto_need_no_spec() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "r.json",
        &json!({"dim": 3, "phi_a": 0.1, "phi_b": 1.0, "ell_c": 0.5, "radii": [1.0, 0.7, 0.85], "t_end": 1e5}),
    );
    let o = sdiff(&["ripen", "--params", "r.json", "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("r/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["survivors"], json!([0]));
    assert!(fs::read_to_string(tmp.path().join("r/trajectory.csv")).unwrap().starts_with("tau,"));

    write(
        tmp.path(),
        "k.json",
        &json!({"n": 50, "density": {"kind": "identical"}, "kappa_hat": 5.0, "gamma0": 0.05, "t_end": 50}),
    );
    let o = sdiff(&["kuramoto", "--params", "k.json", "--out", "k"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fin: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("k/final_state.json")).unwrap()).unwrap();
    assert!(fin["coherence"].as_f64().unwrap() > 0.9, "{fin}");
}

#[test]
fn compare_reports_an_order() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = json!({
        "geometry": {"variant": "Disk2D", "radius": 1.0},
        "compartments": [{"center": [0.0, 0.0], "ell": 1.0, "kappa": null, "model": {"model": "ModelI", "c0": 1.0}}],
        "D": 1.0, "gamma0": 1.0, "epsilon": 0.08
    });
    write(tmp.path(), "s.json", &spec);
    let o = sdiff(&["compare", "--spec", "s.json", "--grid", "11"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/compare.json")).unwrap()).unwrap();
    assert_eq!(c["epsilons"], json!([0.08, 0.04, 0.02]));
    assert!(c["order"].as_f64().unwrap() > 0.0, "{c}");
}

#[test]
fn missing_spec_file_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sdiff(&["greens", "--spec", "absent.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}
