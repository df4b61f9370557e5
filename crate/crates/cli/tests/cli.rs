//! End-to-end runs of the `thermofsi` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

/// Small enough for every mode to finish in well under a second.
const FAST: &[&str] = &[
    "geometry.n=4",
    "geometry.layout=slab:2",
    "run.T=0.2",
    "run.dt=0.05",
];

fn thermofsi(sub: &str, out: &Path, sets: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_thermofsi"));
    cmd.arg(sub).arg("--output-dir").arg(out);
    for s in FAST.iter().chain(sets) {
        cmd.arg("--set").arg(s);
    }
    cmd.env("THERMOFSI_THREADS", "2");
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn zero_data_gives_zero_norms() {
    let dir = TempDir::new().unwrap();
    let o = thermofsi("solve", dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for file in ["norms.csv", "pressures.csv"] {
        let rows = data_rows(&dir.path().join(file));
        assert_eq!(rows.len(), 5);
        for r in rows {
            for v in &r[1..] {
                assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{file}: {r:?}");
            }
        }
    }
}

#[test]
fn every_text_artifact_starts_with_the_header() {
    let dir = TempDir::new().unwrap();
    let o = thermofsi("audit", dir.path(), &["run.dump_state=true"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let first = stdout.lines().next().unwrap();
    let hash = first.rsplit(' ').next().unwrap();
    assert_eq!(hash.len(), 64);
    let expected = format!("# thermofsi {} config-sha256 {hash}", env!("CARGO_PKG_VERSION"));
    for file in ["norms.csv", "pressures.csv", "energy.csv", "bounds.csv", "bounds.txt", "config.toml"] {
        let text = fs::read_to_string(dir.path().join(file)).unwrap();
        assert_eq!(text.lines().next().unwrap(), expected, "{file}");
    }
    assert!(dir.path().join("trajectory.bin").exists());
}

#[test]
fn sweep_writes_one_row_per_ladder_point() {
    let dir = TempDir::new().unwrap();
    let o = thermofsi("sweep", dir.path(), &["sweep.mode=incomp_fluid", "forcing.body=gravity", "forcing.body_amplitude=1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("sweep_incomp_fluid.csv")).unwrap();
    let header = text.lines().nth(1).unwrap();
    assert!(header.starts_with("mode,epsilon,alpha_p,alpha_eta,alpha_lambda,"));
    let rows = data_rows(&dir.path().join("sweep_incomp_fluid.csv"));
    assert_eq!(rows.len(), 4);
    let eps: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(eps, vec![1e-2, 1e-3, 1e-4, 1e-5]);
    assert!(rows.iter().all(|r| r[0] == "incomp_fluid"));
    assert!(dir.path().join("sweep_incomp_fluid_summary.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let sets = ["forcing.heat=bump", "forcing.heat_amplitude=2", "initial.theta0_amplitude=0.5"];
    assert_eq!(code(&thermofsi("audit", a.path(), &sets)), 0);
    assert_eq!(code(&thermofsi("audit", b.path(), &sets)), 0);
    for file in ["norms.csv", "pressures.csv", "energy.csv", "bounds.csv"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn echoed_config_reproduces_the_run() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let sets = ["forcing.body=gravity", "forcing.body_amplitude=1", "forcing.body_envelope=ramp:0.1"];
    assert_eq!(code(&thermofsi("solve", a.path(), &sets)), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_thermofsi"))
        .arg("run")
        .arg("--config")
        .arg(a.path().join("config.toml"))
        .arg("--output-dir")
        .arg(b.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for file in ["norms.csv", "pressures.csv"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let o = thermofsi("solve", dir.path(), &["params.alpha_q=1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("params.alpha_q"));

    let o = thermofsi("solve", dir.path(), &["params.kappa_f=-1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("params.kappa_f"));

    let o = thermofsi("sweep", dir.path(), &["sweep.ladder=[10.0, 100.0]"]);
    assert_eq!(code(&o), 2);

    let o = thermofsi("sweep", dir.path(), &["sweep.mode=solidify", "geometry.layout=solid-inclusion:1:3"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn violated_bound_exits_with_four() {
    let dir = TempDir::new().unwrap();
    // a configuration known to break the sum-of-maxima form of the estimate
    let o = thermofsi("selftest", dir.path(), &["run.seed=156", "run.battery=1"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stdout));
    let rows = data_rows(&dir.path().join("selftest.csv"));
    assert_eq!(rows.len(), 1);
    assert_ne!(rows[0][8], "0");

    let o = thermofsi("selftest", dir.path(), &["run.seed=156", "run.battery=1", "run.estimate_form=max_of_sum"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn limit_model_residual_is_small() {
    let dir = TempDir::new().unwrap();
    let o = thermofsi("c2", dir.path(), &["forcing.body=gravity", "forcing.body_amplitude=1", "forcing.heat=bump", "forcing.heat_amplitude=1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&dir.path().join("c2.csv"));
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!(r[4].parse::<f64>().unwrap() < 1e-9, "{r:?}");
    }
}

fn shipped(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run_shipped(name: &str, out: &Path, sets: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_thermofsi"));
    cmd.arg("run").arg("--config").arg(shipped(name)).arg("--output-dir").arg(out);
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    cmd.output().unwrap()
}

#[test]
fn shipped_zero_config_gives_zero_csvs() {
    let dir = TempDir::new().unwrap();
    let o = run_shipped("zero.toml", dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for file in ["norms.csv", "pressures.csv"] {
        let rows = data_rows(&dir.path().join(file));
        assert_eq!(rows.len(), 51);
        assert!(rows.iter().flat_map(|r| &r[1..]).all(|v| v.parse::<f64>().unwrap() == 0.0), "{file}");
    }
}

#[test]
fn shipped_sweep_config_has_one_row_per_ladder_point() {
    let dir = TempDir::new().unwrap();
    let o = run_shipped("sweep_incomp.toml", dir.path(), &["geometry.n=4", "geometry.layout=slab:2", "run.T=0.2", "run.dt=0.05"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&dir.path().join("sweep_incomp_both.csv")).len(), 4);
}

#[test]
fn shipped_c2_config_runs() {
    let dir = TempDir::new().unwrap();
    let o = run_shipped("c2.toml", dir.path(), &["run.T=0.2", "run.dt=0.05"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&dir.path().join("c2.csv")).len(), 5);
}
