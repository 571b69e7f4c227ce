use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{Matrix6, Vector6};
use pkm_stiffness_cli::config::{parse_config, RunConfig};
use pkm_stiffness_cli::output::{read_map_csv, write_map_csv};
use pkm_stiffness_cli::run::{run_point, run_sweep, run_table};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pkm-stiffness"));
    c.env_remove("PKM_STIFFNESS_CONFIG_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_GRID: &str = "[manipulator]\npreset = \"3prpar-default\"\n[region]\ngrid = [3, 2, 3]\n";

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn negative_beam_length_names_the_key() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[link.leg.beam]\nL = -1.0\nE = 2.1e5\nG = 8.1e4\nA = 314.0\nIy = 7850.0\nIz = 7850.0\nJ = 15700.0\n",
    );
    let o = run(&["validate", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("link.leg.beam.L"), "{}", stderr(&o));
}

#[test]
fn asymmetric_matrix_fails_spd_validation() {
    let mut m = Matrix6::<f64>::identity() * 1e-4;
    m[(0, 1)] = 1e-3;
    let entries: Vec<String> = m.transpose().iter().map(|v| format!("{v:e}")).collect();
    let text = format!("[link.foot]\nmatrix6x6 = [{}]\n", entries.join(", "));
    let err = parse_config(&text).unwrap_err().to_string();
    assert!(err.contains("link.foot.matrix6x6"), "{err}");
    assert!(err.contains("symmetric"), "{err}");

    let dir = TempDir::new().unwrap();
    let o = run(&["validate", s(&write(dir.path(), "m.toml", &text))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn print_config_fills_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "min.toml", "[manipulator]\npreset = \"3puu-default\"\n");
    let o = run(&["--print-config", "validate", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for key in ["k_act", "[link.foot.beam]", "[link.leg.beam]", "[tolerances]", "foot_length", "grid"] {
        assert!(text.contains(key), "missing {key} in\n{text}");
    }
    let reparsed: RunConfig = parse_config(&text).unwrap();
    assert_eq!(reparsed, reparsed.resolved().unwrap());
    assert_eq!(reparsed, parse_config("").unwrap().resolved().unwrap());
}

#[test]
fn sweep_output_is_byte_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "g.toml", SMALL_GRID);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("map{i}.csv"));
        let o = run(&["sweep", s(&cfg), "--out", s(&out), "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stderr(&o).contains("k_tran"));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.starts_with("# pkm-stiffness map v1"));
    assert_eq!(text.lines().count(), 2 + 18);
}

#[test]
fn sweep_records_follow_raster_order() {
    let cfg = parse_config(SMALL_GRID).unwrap();
    let r = run_sweep(&cfg, Some(3)).unwrap();
    let keys: Vec<_> = r.records.iter().map(|m| (m.x, m.y, m.z)).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(keys, sorted);
}

#[test]
fn jsonl_mirrors_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "g.toml", SMALL_GRID);
    let o = run(&["sweep", s(&cfg), "--format", "jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    let csv_records = run_sweep(&parse_config(SMALL_GRID).unwrap(), None).unwrap().records;
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), csv_records.len());
    for (l, r) in lines.iter().zip(&csv_records) {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["k_m"].as_array().unwrap().len(), 36);
        assert_eq!(v["k_tran"].as_f64().unwrap(), r.k_tran);
        assert_eq!(v["singular"].as_bool().unwrap(), r.singular);
    }
}

#[test]
fn single_sample_summary_equals_the_record() {
    let cfg = parse_config("[region]\nmin = [10, -5, 3]\nmax = [10, -5, 3]\ngrid = [1, 1, 1]\n").unwrap();
    let r = run_sweep(&cfg, None).unwrap();
    assert_eq!(r.records.len(), 1);
    let rec = &r.records[0];
    assert_eq!((rec.x, rec.y, rec.z), (10.0, -5.0, 3.0));
    let sum = r.summary();
    assert_eq!(sum.samples, 1);
    for (st, v) in [(sum.k_tran, rec.k_tran), (sum.k_rot, rec.k_rot)] {
        assert_eq!((st.min, st.max, st.mean), (v, v, v));
    }
}

#[test]
fn csv_round_trip_is_lossless_and_symmetric() {
    let r = run_sweep(&parse_config(SMALL_GRID).unwrap(), None).unwrap();
    let mut buf = Vec::new();
    write_map_csv(&r.records, &mut buf).unwrap();
    let back = read_map_csv(buf.as_slice()).unwrap();
    assert_eq!(back, r.records);
    for rec in &back {
        let k = rec.k_matrix();
        assert!((k - k.transpose()).amax() <= 1e-9 * k.amax());
    }

    // an asymmetric entry is caught on read-back
    let text = String::from_utf8(buf).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[2].split(',').map(String::from).collect();
    cells[6] = "1e9".into();
    lines[2] = cells.join(",");
    let err = read_map_csv(lines.join("\n").as_bytes()).unwrap_err().to_string();
    assert!(err.contains("not symmetric"), "{err}");
}

fn home_cfg() -> RunConfig {
    parse_config("[manipulator]\npreset = \"3puu-default\"\n").unwrap()
}

#[test]
fn zero_wrench_gives_zero_response() {
    let rep = run_point(&home_cfg(), nalgebra::Vector3::new(5.0, -10.0, 20.0), Some([0.0; 6])).unwrap();
    let load = rep.load.unwrap();
    assert!(load.deflection.iter().all(|v| *v == 0.0));
    for c in &load.chains {
        for v in c.f.iter().chain(&c.dtheta).chain(&c.tau0).chain(&c.dq) {
            assert_eq!(*v, 0.0);
        }
    }
}

#[test]
fn vertical_force_at_home_deflects_vertically() {
    let rep = run_point(&home_cfg(), nalgebra::Vector3::zeros(), Some([0.0, 0.0, -100.0, 0.0, 0.0, 0.0])).unwrap();
    let dt = rep.load.unwrap().deflection;
    assert!(dt[2] < 0.0);
    for (i, v) in dt.iter().enumerate() {
        if i != 2 {
            assert!(v.abs() <= 1e-9, "component {i}: {v:e}");
        }
    }
}

#[test]
fn wrench_from_stiffness_recovers_deflection() {
    let p = nalgebra::Vector3::new(30.0, 12.0, -40.0);
    let first = run_point(&home_cfg(), p, None).unwrap();
    assert!(first.load.is_none());
    let k = Matrix6::from_fn(|i, j| first.k_m[i][j]);
    let dt = Vector6::new(0.01, -0.02, 0.005, 1e-4, -2e-4, 5e-5);
    let w = k * dt;
    let rep = run_point(&home_cfg(), p, Some([w[0], w[1], w[2], w[3], w[4], w[5]])).unwrap();
    let got = Vector6::from_column_slice(&rep.load.unwrap().deflection);
    assert!((got - dt).norm() <= 1e-9 * dt.norm(), "{got}");
}

#[test]
fn point_command_prints_json_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "p.toml", "[load]\nwrench = [0, 0, 50, 0, 0, 0]\n");
    let o = run(&["point", s(&cfg), "--at", "10,-20,5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["chains"].as_array().unwrap().len(), 3);
    assert_eq!(v["load"]["chains"][0]["dq"].as_array().unwrap().len(), 4);
    assert_eq!(v["load"]["wrench"][2].as_f64(), Some(50.0));

    let o = run(&["point", s(&cfg), "--at", "0,0,0", "--wrench", "1,0,0,0,0,0"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["load"]["wrench"][0].as_f64(), Some(1.0));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["sweep"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["validate", s(&dir.path().join("missing.toml"))]).status.code(), Some(1));
    let unknown = write(dir.path(), "u.toml", "[manipulator]\npresett = \"x\"\n");
    assert_eq!(run(&["validate", s(&unknown)]).status.code(), Some(1));
    let ok = write(dir.path(), "ok.toml", "");
    assert_eq!(run(&["validate", s(&ok)]).status.code(), Some(0));
    assert_eq!(run(&["point", s(&ok), "--at", "1,2"]).status.code(), Some(1));

    let far = run(&["point", s(&ok), "--at", "2000,0,0"]);
    assert_eq!(far.status.code(), Some(2));
    assert!(stderr(&far).contains("2000"), "{}", stderr(&far));

    let out_of_reach = write(dir.path(), "far.toml", "[region]\nmin = [900, 900, 900]\nmax = [1000, 1000, 1000]\ngrid = [2, 2, 2]\n");
    let o = run(&["sweep", s(&out_of_reach)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no reachable sample"), "{}", stderr(&o));
}

#[test]
fn config_dir_env_resolves_relative_paths() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "env.toml", "[manipulator]\npreset = \"3prpar-default\"\n");
    let o = bin()
        .env("PKM_STIFFNESS_CONFIG_DIR", dir.path())
        .args(["validate", "env.toml"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(run(&["validate", "env.toml"]).status.code(), Some(1));
}

#[test]
fn table_has_six_records_in_layout_order() {
    let rows = run_table(&Default::default()).unwrap();
    let keys: Vec<_> = rows.iter().map(|r| format!("{} {}", r.architecture, r.point)).collect();
    assert_eq!(keys, ["3-PUU Q0", "3-PUU Q1", "3-PUU Q2", "3-PRPaR Q0", "3-PRPaR Q1", "3-PRPaR Q2"]);
    for r in &rows {
        assert_eq!(r.x, r.y);
        assert_eq!(r.y, r.z);
        assert_eq!(r.c_tran, 1.0 / r.k_tran);
        assert_eq!(r.c_rot, 1.0 / r.k_rot);
    }
}

#[test]
fn partial_geometry_keeps_the_other_defaults() {
    let cfg = parse_config("[manipulator.geometry]\nleg_length = 300.0\n").unwrap();
    let g = cfg.geometry().unwrap();
    assert_eq!(g.leg_length, 300.0);
    assert_eq!(g.foot_length, pkm_stiffness::architectures::DEFAULT_FOOT_LENGTH);
}
