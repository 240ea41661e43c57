use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn sonot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sonot")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn planted_config(out: &Path) -> Value {
    json!({
        "data": {
            "kind": "gaussian", "k": 2, "m_per": 4, "omega": 0.05, "seed": 1,
            "centers_s": [[0.0, 0.0], [4.0, 0.0]],
            "centers_t": [[0.0, 1.0], [4.0, 1.0]]
        },
        "kernel": { "lambda": 2.0, "sigma_s": 1e6, "sigma_t": 1e6, "supervised": true },
        "solver": { "epochs": 50, "seed": 1, "log_every": 0 },
        "theta": 10.0,
        "compare": { "methods": ["son", "sinkhorn", "exact"] },
        "output_dir": out.to_str().unwrap()
    })
}

fn write_config(dir: &Path, v: &Value) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn missing_config_is_a_config_error() {
    let o = sonot(&["solve", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/config.json"));
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = planted_config(&dir.path().join("out"));
    v["solver"]["epoks"] = json!(3);
    let cfg = write_config(dir.path(), &v);
    let o = sonot(&["solve", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoks"), "{}", stderr(&o));
}

#[test]
fn solve_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &planted_config(&out));
    let o = sonot(&["solve", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["coupling.csv", "support.csv", "blocks.csv", "report.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let rep = read_json(&out.join("report.json"));
    assert_eq!(rep["schema_version"], json!(1));
    assert!(rep["feasibility_gap"].as_f64().unwrap() <= 1e-12);
    let plan = sonot::io::read_matrix_csv(out.join("coupling.csv")).unwrap();
    assert_eq!(plan.dim(), (8, 8));
    assert!((plan.sum() - 1.0).abs() < 1e-12);
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &planted_config(&out));
    let o = sonot(&["solve", &cfg, "--solver.epochs=3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rep = read_json(&out.join("report.json"));
    assert_eq!(rep["config"]["epochs"], json!(3));
    assert_eq!(rep["objective_trace"].as_array().unwrap().len(), 3);
}

#[test]
fn certify_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &planted_config(&out));
    let o = sonot(&["certify", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = read_json(&out.join("certificate.json"));
    assert!(c["delta"].as_f64().unwrap() > 0.0);
    let o = sonot(&["compare", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = read_json(&out.join("compare.json"));
    assert_eq!(c["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg_a = dir.path().join("a.json");
    let cfg_b = dir.path().join("b.json");
    std::fs::write(&cfg_a, planted_config(&a).to_string()).unwrap();
    std::fs::write(&cfg_b, planted_config(&b).to_string()).unwrap();
    assert_eq!(sonot(&["gen", cfg_a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(sonot(&["gen", cfg_b.to_str().unwrap()]).status.code(), Some(0));
    for f in ["source.csv", "target.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn zero_clusters_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = planted_config(&dir.path().join("out"));
    v["data"] = json!({"kind": "gaussian", "k": 0, "m_per": 4, "omega": 0.05, "seed": 1});
    let cfg = write_config(dir.path(), &v);
    assert_eq!(sonot(&["solve", &cfg]).status.code(), Some(2));
}

#[test]
fn empty_method_list_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = planted_config(&dir.path().join("out"));
    v["compare"]["methods"] = json!([]);
    let cfg = write_config(dir.path(), &v);
    let o = sonot(&["compare", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("methods"));
}

#[test]
fn exact_over_cap_is_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = planted_config(&dir.path().join("out"));
    v["data"]["m_per"] = json!(11);
    v["compare"]["methods"] = json!(["exact"]);
    let cfg = write_config(dir.path(), &v);
    assert_eq!(sonot(&["compare", &cfg]).status.code(), Some(4));
}

#[test]
fn constant_cost_certifies_zero_margin() {
    // coincident points give a constant cost matrix
    let dir = tempfile::tempdir().unwrap();
    let mut v = planted_config(&dir.path().join("out"));
    v["data"]["omega"] = json!(0.0);
    v["data"]["centers_s"] = json!([[0.0, 0.0], [0.0, 0.0]]);
    v["data"]["centers_t"] = json!([[1.0, 0.0], [1.0, 0.0]]);
    let cfg = write_config(dir.path(), &v);
    let o = sonot(&["certify", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = read_json(&dir.path().join("out").join("certificate.json"));
    assert_eq!(c["delta"].as_f64().unwrap(), 0.0);
    assert_eq!(c["part1_holds"], json!(false));
}

#[test]
fn csv_data_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.csv"), "0,0,0\n0,0.1,0\n1,4,0\n1,4.1,0\n").unwrap();
    std::fs::write(dir.path().join("t.csv"), "0,0,1\n0,0.1,1\n1,4,1\n1,4.1,1\n").unwrap();
    let mut v = planted_config(Path::new("out"));
    v["data"] = json!({"kind": "csv", "source": "s.csv", "target": "t.csv"});
    let cfg = write_config(dir.path(), &v);
    let o = sonot(&["solve", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("out").join("report.json").exists());
}

#[test]
fn certify_restricts_to_shared_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut v = planted_config(&out);
    v["data"] = json!({
        "kind": "gaussian", "k": 3, "m_per": 4, "omega": 0.05, "seed": 7,
        "centers_s": [[0.0, 0.0], [4.0, 0.0], [2.0, 6.0]],
        "centers_t": [[0.0, 1.0], [4.0, 1.0], [2.0, 7.0]],
        "target_clusters": [0, 1]
    });
    let cfg = write_config(dir.path(), &v);
    let o = sonot(&["certify", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = read_json(&out.join("certificate.json"));
    assert_eq!(c["matched_classes"], json!([0, 1]));
    assert_eq!(c["k"], json!(2));
    assert_eq!(c["source_sizes"], json!([4, 4]));
}
