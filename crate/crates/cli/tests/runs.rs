use pamlab_cli::config::{Experiment, RunConfig};
use pamlab_cli::record::{Provenance, Status};
use std::fs;
use std::path::Path;
use std::process::Command;

const SMALL_SPECTRUM: &str = "seed = 4\n[geometry]\nside = 2.0\nh = 0.25\n[physics]\nk = 4\n";

fn resolved(text: &str, exp: Experiment) -> RunConfig {
    RunConfig::parse(text).unwrap().resolve(exp).unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn pamlab(args: &[&str], env_root: Option<&Path>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pamlab"));
    cmd.args(args).env_remove(pamlab_cli::OUT_ROOT_VAR);
    if let Some(root) = env_root {
        cmd.env(pamlab_cli::OUT_ROOT_VAR, root);
    }
    cmd.output().unwrap()
}

#[test]
fn identical_configs_give_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    for (exp, text) in [(Experiment::Spectrum, SMALL_SPECTRUM), (Experiment::Constants, "")] {
        let cfg = resolved(text, exp);
        let a = pamlab_cli::run(&cfg, tmp.path().join(format!("{exp}-a")), 1).unwrap();
        let b = pamlab_cli::run(&cfg, tmp.path().join(format!("{exp}-b")), 0).unwrap();
        assert_eq!(a.status, Status::Ok);
        assert_eq!(a.config_hash, b.config_hash);
        let (ta, tb) = (csv_files(&a.run_dir), csv_files(&b.run_dir));
        assert!(!ta.is_empty());
        assert_eq!(ta, tb, "{exp} tables differ between runs");
        let sa = fs::read(a.run_dir.join("summary.json")).unwrap();
        assert_eq!(sa, fs::read(b.run_dir.join("summary.json")).unwrap());
    }
}

#[test]
fn run_folder_holds_config_record_and_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = resolved(SMALL_SPECTRUM, Experiment::Spectrum);
    let rec = pamlab_cli::run(&cfg, tmp.path().join("run"), 0).unwrap();
    let stored = RunConfig::parse(&fs::read_to_string(rec.run_dir.join("config.toml")).unwrap()).unwrap();
    assert_eq!(stored, cfg);
    let record: serde_json::Value = serde_json::from_str(&fs::read_to_string(rec.run_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["config_hash"], cfg.hash());
    assert_eq!(record["status"], "ok");
    assert!(record["checks"].as_array().unwrap().iter().any(|c| c["name"] == "dense_oracle_gap"));
    for name in ["noise.bin", "eigvec_1.bin"] {
        assert!(rec.run_dir.join(name).is_file(), "{name}");
    }
    for (name, bytes) in csv_files(&rec.run_dir) {
        let text = String::from_utf8(bytes).unwrap();
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        assert_eq!(&header[..5], &Provenance::COLUMNS, "{name}");
        assert!(text.lines().nth(1).unwrap().starts_with("4,2,0.25,0.25,"), "{name}");
    }
}

#[test]
fn constants_emit_kappa_c_and_dimension_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = resolved("[physics]\nalpha = [0.05, 0.5]\nbeta = [0.1]\nv = [1.0]\n", Experiment::Constants);
    let rec = pamlab_cli::run(&cfg, tmp.path().join("c"), 0).unwrap();
    assert_eq!(rec.status, Status::Ok);
    let mut rd = csv::Reader::from_path(rec.run_dir.join("constants.csv")).unwrap();
    let row = rd.records().next().unwrap().unwrap();
    let kappa: f64 = row[8].parse().unwrap();
    let c: f64 = row[9].parse().unwrap();
    assert!((c - 2.0 / kappa.powi(4)).abs() <= 1e-12 * c);
    let dims: Vec<f64> = csv::Reader::from_path(rec.run_dir.join("spatial_dimension.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap()[6].parse().unwrap())
        .collect();
    assert!(dims[0] > 0.0 && dims[0] < 2.0);
    assert_eq!(dims[1], 0.0);
    assert!(rec.run_dir.join("spatiotemporal_dimension.csv").is_file());
}

#[test]
fn fk_compare_desk_config_gives_a_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default().resolve(Experiment::FkCompare).unwrap();
    let rec = pamlab_cli::run(&cfg, tmp.path().join("fk"), 0).unwrap();
    assert_eq!(rec.status, Status::Ok, "{:?}", rec.checks);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(rec.run_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["verdict"], "within 3 sigma");
    assert_eq!(rec.tables[0].rows, 5);
}

#[test]
fn exit_codes_follow_outcomes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let write = |name: &str, text: &str| {
        let p = tmp.path().join(name);
        fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };

    let ok = write("ok.toml", SMALL_SPECTRUM);
    assert_eq!(pamlab(&["spectrum", "--config", &ok, "--out", out], None).status.code(), Some(0));

    let bad = write("bad.toml", "[geometry]\nsidee = 1.0\n");
    let o = pamlab(&["spectrum", "--config", &bad, "--out", out], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));

    // Stable but too coarse for Crank-Nicolson to track the spectral solution.
    let coarse = write("coarse.toml", "[geometry]\nside = 2.0\nh = 0.25\n[physics]\nt = 1.0\ndt = 0.2\n");
    let o = pamlab(&["evolve-compare", "--config", &coarse, "--out", out], None);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL  crank_nicolson_rel_err"));
}

#[test]
fn module_failure_leaves_marker_and_partial_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = resolved("[geometry]\nside = 2.0\nh = 0.25\n[physics]\nt = 0.5\ndt = 0.25\nn_paths = 10\nrefine = 1\n", Experiment::FkCompare);
    let rec = pamlab_cli::run(&cfg, tmp.path().join("fk"), 0).unwrap();
    assert_eq!(rec.status, Status::Error);
    assert!(rec.error.as_deref().unwrap().contains("time step"));
    assert!(rec.run_dir.join("FAILED").is_file());
    assert!(rec.run_dir.join("config.toml").is_file());
    let record: serde_json::Value = serde_json::from_str(&fs::read_to_string(rec.run_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["status"], "error");
}

#[test]
fn env_var_sets_the_output_root_only() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("from-env");
    let o = pamlab(&["constants", "--seed", "3"], Some(&root));
    assert_eq!(o.status.code(), Some(0));
    let runs: Vec<_> = fs::read_dir(&root).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let dir = runs[0].as_ref().unwrap().path();
    assert!(dir.file_name().unwrap().to_string_lossy().starts_with("constants-"));
    assert!(fs::read_to_string(dir.join("config.toml")).unwrap().contains("seed = 3"));

    // --out wins over the environment.
    let flag = tmp.path().join("from-flag");
    let o = pamlab(&["constants", "--out", flag.to_str().unwrap()], Some(&root));
    assert_eq!(o.status.code(), Some(0));
    assert!(flag.is_dir());
    assert_eq!(fs::read_dir(&root).unwrap().count(), 1);
}
