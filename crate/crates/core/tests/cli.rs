mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use parhyp::config::{default_config, resolve, ProblemKind, RunConfig};
use parhyp::output::{read_field_table, write_trajectory, RunManifest};
use parhyp::stepper::{advance_trajectory, SchemeConfig};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn parhyp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parhyp")).args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_cfg(dir: &Path, name: &str, cfg: &RunConfig) -> String {
    let path = dir.join(name);
    cfg.save(&path).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn verify_default_configs() {
    for name in ["p1_default.json", "p2_default.json"] {
        let cfg = configs().join(name);
        let out = parhyp(&["verify", "--config", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stdout));
        assert!(text(&out.stdout).contains("all checks passed"));
    }
}

#[test]
fn sweep_default_p1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("p1_default.json");
    let out = parhyp(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    let slope: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("slope "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(slope >= 0.45, "{stdout}");
    let rates = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let mut lines = rates.lines();
    assert_eq!(
        lines.next().unwrap(),
        "N,h,v_sup_h,bv_l2_h,phi_sup_v2,theta_sup_h,theta_l2_v1,composite,M_h,source_error"
    );
    assert_eq!(lines.count(), 5);
}

#[test]
fn out_of_window_step_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config(ProblemKind::P1);
    cfg.final_time = 2.0;
    cfg.steps = 1;
    let path = write_cfg(dir.path(), "wide.json", &cfg);
    let out = parhyp(&["run", "--config", &path]);
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("admissibility window") && err.contains("0.7071067811865"), "{err}");
}

#[test]
fn parse_and_argument_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\"problem\": \"P1\", \"beta\": {\"quartic\": {}}}").unwrap();
    assert_eq!(parhyp(&["run", "--config", path.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(parhyp(&["run", "--config", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(parhyp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(parhyp(&["--help"]).status.code(), Some(0));
}

#[test]
fn solver_failure_exits_with_solver_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config(ProblemKind::P1);
    cfg.tolerances.fp_max_iter = 1;
    let path = write_cfg(dir.path(), "fp.json", &cfg);
    let out = parhyp(&["run", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("step 1"));
}

#[test]
fn verification_failure_names_the_first_failed_check() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config(ProblemKind::P1);
    // stopping the fixed-point loop early leaves the order-parameter equation
    // unsatisfied
    cfg.tolerances.fp_tol = 1e-3;
    let path = write_cfg(dir.path(), "loose.json", &cfg);
    let out = parhyp(&["verify", "--config", &path, "--seed", "5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stdout).contains("first failure: scheme residuals"));
}

#[test]
fn run_outputs_are_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config(ProblemKind::P2);
    cfg.nodes = 17;
    cfg.steps = 16;
    let path = write_cfg(dir.path(), "small.json", &cfg);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = parhyp(&["run", "--config", &path, "--out", out_dir.to_str().unwrap(), "--seed", "3"]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    }
    for f in ["theta.csv", "phi.csv", "v.csv", "z.csv"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert_eq!(x, y, "{f}");
        let table = read_field_table(&a.join(f)).unwrap();
        assert_eq!((table.rows.len(), table.coordinates.len()), (17, 17));
    }
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let (inst, scheme, _) = resolve(&cfg).unwrap();
    let traj = advance_trajectory(&inst, &scheme).unwrap();
    assert_eq!(manifest.contraction_bound, scheme.contraction_bound().unwrap());
    assert_eq!(manifest.max_contraction_ratio, traj.max_contraction_ratio());
    assert_eq!(manifest.reports.len(), 16);
    assert_eq!(manifest.config.unwrap().nodes, 17);
    assert!(manifest.ledger.unwrap().passed);
}

#[test]
fn zero_trajectory_csv() {
    let problem = common::DenseProblem::p1(3);
    let inst = problem.instance(vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]);
    let traj = advance_trajectory(&inst, &SchemeConfig::for_instance(&inst, 0.5, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_trajectory(&traj, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("phi.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,0e0,5e-1,1e0");
    assert_eq!(&lines[1..], ["0e0,0e0,0e0,0e0", "2.5e-1,0e0,0e0,0e0", "5e-1,0e0,0e0,0e0"]);
}

#[test]
fn trajectory_round_trips_bitwise() {
    let inst = common::smooth_p1(9);
    let traj = advance_trajectory(&inst, &SchemeConfig::for_instance(&inst, 1.0, 8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_trajectory(&traj, dir.path()).unwrap();
    let theta = read_field_table(&dir.path().join("theta.csv")).unwrap();
    let z = read_field_table(&dir.path().join("z.csv")).unwrap();
    for (n, s) in traj.states.iter().enumerate() {
        assert_eq!(theta.times[n].to_bits(), s.time.to_bits());
        assert!(theta.rows[n].iter().zip(&s.theta).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(z.rows[n].iter().zip(&s.z).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["p1_default.json", "p2_default.json"] {
        let first = RunConfig::from_path(&configs().join(name)).unwrap();
        let again_path = dir.path().join(name);
        first.save(&again_path).unwrap();
        let second = RunConfig::from_path(&again_path).unwrap();
        assert_eq!(first, second);
        let (a, sa, pa) = resolve(&first).unwrap();
        let (b, sb, pb) = resolve(&second).unwrap();
        assert_eq!((a.theta0, a.phi0, a.v0, sa, pa), (b.theta0, b.phi0, b.v0, sb, pb));
    }
}

#[test]
fn log_level_from_environment() {
    let cfg = configs().join("p1_default.json");
    let out = Command::new(env!("CARGO_BIN_EXE_parhyp"))
        .args(["verify", "--config", cfg.to_str().unwrap()])
        .env("PARHYP_LOG", "debug")
        .output()
        .unwrap();
    assert!(text(&out.stderr).contains("fixed-point iterations"));
}
