use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use ucnn_cli::{CliError, ExperimentSpec};

fn ucnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ucnn")).args(args).output().expect("binary runs")
}

fn write_spec(dir: &Path, json: &str) -> String {
    let p = dir.join("spec.json");
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect()
}

const TINY: &str = r#"{
  "networks": [{"name": "tiny", "layers": [
    {"name": "c1", "shape": {"w": 10, "h": 10, "c": 4, "r": 3, "s": 3, "k": 8}},
    {"name": "c2", "shape": {"w": 8, "h": 8, "c": 8, "r": 1, "s": 1, "k": 4}, "relu": false}
  ]}],
  "densities": [0.9, 0.5],
  "u_values": [3, 17],
  "precisions": [8],
  "seed": 5
}"#;

#[test]
fn smoke_grid_matches_the_oracle() {
    let d = TempDir::new().unwrap();
    let o = ucnn(&["run", "--preset", "smoke", "--check-oracle", "--out", d.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&d.path().join("run.csv"));
    let configs: std::collections::BTreeSet<&String> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(configs.len(), 20);
    assert!(rows.iter().all(|r| r[3] == "true" && r[4] == "0"));
}

#[test]
fn empty_sweep_writes_only_headers() {
    let d = TempDir::new().unwrap();
    let spec = write_spec(d.path(), r#"{"networks": ["lenet-like"], "densities": [], "u_values": [3], "precisions": [8]}"#);
    let out = d.path().to_str().unwrap();
    assert!(ucnn(&["sim", "--spec", &spec, "--out", out]).status.success());
    let text = fs::read_to_string(d.path().join("sim.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(text.trim_end().split(',').collect::<Vec<_>>(), ucnn_cli::SIM_COLUMNS);
    assert_eq!(fs::read_to_string(d.path().join("sim.json")).unwrap().trim(), "[]");
    assert!(ucnn(&["report", "--out", out]).status.success());
    assert_eq!(fs::read_to_string(d.path().join("report_energy.csv")).unwrap().lines().count(), 1);
    assert!(ucnn(&["run", "--spec", &spec, "--out", out, "--check-oracle"]).status.success());
    assert_eq!(fs::read_to_string(d.path().join("run.csv")).unwrap().lines().count(), 1);
}

#[test]
fn sim_is_byte_reproducible_and_seeded() {
    let d = TempDir::new().unwrap();
    let spec = write_spec(d.path(), TINY);
    let run = |name: &str, extra: &[&str]| {
        let out = d.path().join(name);
        let mut args = vec!["sim", "--spec", &spec, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(ucnn(&args).status.success());
        (fs::read(out.join("sim.csv")).unwrap(), fs::read(out.join("sim.json")).unwrap())
    };
    let a = run("a", &["--workers", "3"]);
    let b = run("b", &["--workers", "1"]);
    let c = run("c", &["--seed", "6"]);
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    // 2 densities x (2 baselines + 2 U) x 2 layers
    assert_eq!(String::from_utf8(a.0).unwrap().lines().count(), 1 + 16);
}

#[test]
fn report_normalizes_per_group() {
    let d = TempDir::new().unwrap();
    let spec = write_spec(d.path(), TINY);
    let out = d.path().to_str().unwrap();
    assert!(ucnn(&["sim", "--spec", &spec, "--out", out]).status.success());
    assert!(ucnn(&["report", "--out", out]).status.success());
    let energy = csv_rows(&d.path().join("report_energy.csv"));
    assert_eq!(energy.len(), 8);
    for r in energy.iter().filter(|r| r[3] == "DCNN") {
        assert_eq!(r[7], "1.000000");
    }
    let parts: f64 = energy[2][4..7].iter().map(|x| x.parse::<f64>().unwrap()).sum();
    assert!((parts - energy[2][7].parse::<f64>().unwrap()).abs() < 1e-5);
    let cycles = csv_rows(&d.path().join("report_cycles.csv"));
    for r in cycles.iter().filter(|r| r[3] == "DCNN_sp") {
        assert_eq!(r[5], "1.000000");
    }
    let size = csv_rows(&d.path().join("report_model_size.csv"));
    let dcnn = size.iter().find(|r| r[3] == "DCNN").unwrap();
    assert_eq!(dcnn[6], "8.000000");
}

#[test]
fn compile_writes_readable_tables() {
    let d = TempDir::new().unwrap();
    let spec = write_spec(d.path(), TINY);
    let out = d.path().to_str().unwrap();
    assert!(ucnn(&["compile", "--spec", &spec, "--out", out]).status.success());
    let sizes = csv_rows(&d.path().join("sizes.csv"));
    assert_eq!(sizes.len(), 8);
    let row = &sizes[0];
    assert_eq!(row[0], "tiny/p8/d0.50/UCNN_U3");
    let table = d.path().join("tables/tiny/p8/d0.50/UCNN_U3").join(format!("{}.tbl", row[1]));
    let layer = ucnn_core::tables::read_layer(fs::File::open(table).unwrap()).unwrap();
    assert_eq!(layer.table_bits().to_string(), row[8]);
    assert_eq!(layer.options.g, 4);
    assert!(ucnn(&["gen", "--spec", &spec, "--out", out]).status.success());
    let f = ucnn_core::QuantTensor::load(d.path().join("gen/tiny/p8/d0.50/u3/c1.filters.bin")).unwrap();
    assert_eq!(f.shape, vec![8, 4, 3, 3]);
}

#[test]
fn exit_codes() {
    let d = TempDir::new().unwrap();
    let out = d.path().to_str().unwrap();
    let bad = write_spec(d.path(), r#"{"networks": ["lenet-like"], "densitys": [0.5]}"#);
    assert_eq!(ucnn(&["sim", "--spec", &bad, "--out", out]).status.code(), Some(1));
    assert_eq!(ucnn(&["sim", "--preset", "nope", "--out", out]).status.code(), Some(1));
    assert_eq!(ucnn(&["sim", "--out", out]).status.code(), Some(1));
    let small = write_spec(
        d.path(),
        r#"{"networks": ["alexnet-like"], "densities": [0.5], "u_values": [17], "precisions": [8], "l2_bytes": 4096}"#,
    );
    let o = ucnn(&["sim", "--spec", &small, "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("alexnet-like/p8/d0.50/DCNN") && msg.contains("conv1"), "{msg}");
    assert_eq!(CliError::Oracle("x".into()).exit_code(), 2);
}

#[test]
fn unnormalized_points_are_flagged() {
    let mut spec: ExperimentSpec = serde_json::from_str(TINY).unwrap();
    spec.variants = vec![ucnn_sim::Variant::Ucnn];
    spec.u_values = vec![17];
    spec.densities = vec![0.9];
    spec.vectorizations = vec![ucnn_cli::Vectorization { g: 1, v_w: 1 }, ucnn_cli::Vectorization { g: 2, v_w: 4 }];
    let d = TempDir::new().unwrap();
    let runs = ucnn_cli::cmd_sim(&spec, d.path()).unwrap();
    assert_eq!(runs.len(), 2);
    let rows = csv_rows(&d.path().join("sim.csv"));
    let flags: Vec<(&str, &str)> = rows.iter().map(|r| (r[5].as_str(), r[10].as_str())).collect();
    assert_eq!(flags, [("UCNN_U17_G1_VW1", "false"), ("UCNN_U17_G1_VW1", "false"), ("UCNN_U17_G2_VW4", "true"), ("UCNN_U17_G2_VW4", "true")]);
}
