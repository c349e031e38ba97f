use std::path::{Path, PathBuf};
use std::process::Command;

use hubloc::instance::tiny_fixture;
use hubloc::Instance;
use hubloc_cli::output::SolutionFile;
use hubloc_cli::records::read_records;
use hubloc_cli::{Method, RunStatus};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hubloc"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn convert_round_trips_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ap10.toml");
    let (code, _, err) = run(&["convert", s(&data("ap10.txt")), "--format", "AP", s(&out), "--gauge", "LINF"]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&out).unwrap();
    let inst = Instance::load(&out).unwrap();
    assert_eq!(inst.num_nodes(), 10);
    assert_eq!(inst.to_toml(), text);
    let again = Instance::from_toml(&inst.to_toml()).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            assert_eq!(again.flow(i, j).to_bits(), inst.flow(i, j).to_bits());
        }
        assert_eq!(again.node(i), inst.node(i));
        assert_eq!(again.neighborhood(i).max_radius.to_bits(), inst.neighborhood(i).max_radius.to_bits());
    }
}

#[test]
fn convert_flags_normalized_cab_flows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cab.toml");
    let (code, _, err) = run(&["convert", s(&data("cab10.txt")), "--format", "cab", s(&out)]);
    assert_eq!(code, 0, "{err}");
    let inst = Instance::load(&out).unwrap();
    assert!(inst.meta()["flows"].contains("normalized"), "{:?}", inst.meta());
    assert!((inst.total_flow() - 1.0).abs() < 1e-9);
    assert!(inst.fixed_costs().iter().all(|&f| f == 100.0));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["convert", "/no/such/file.txt", "--format", "AP", s(&dir.path().join("x.toml"))]);
    assert_eq!(code, 2);
    assert!(err.contains("/no/such/file.txt"), "{err}");
    assert_eq!(run(&["frobnicate"]).0, 1);
    assert_eq!(run(&["solve", "x.toml", "--method", "f9"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "dataset,n\nAP,10\n").unwrap();
    let (code, _, err) = run(&["aggregate", s(&bad)]);
    assert_eq!(code, 2);
    assert!(err.contains("lacks columns"), "{err}");
}

fn tiny_scenario(dir: &Path, n: usize, seed: u64, extra: &[&str]) -> PathBuf {
    let raw = dir.join(format!("tiny{n}-{seed}.txt"));
    std::fs::write(&raw, tiny_fixture(n, seed).to_text()).unwrap();
    let out = dir.join(format!("tiny{n}-{seed}.toml"));
    let mut args = vec!["convert", s(&raw), "--format", "AP", s(&out)];
    args.extend_from_slice(extra);
    let (code, _, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    out
}

fn read_solution(path: &Path) -> SolutionFile {
    SolutionFile::from_toml(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_solution_and_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = tiny_scenario(dir.path(), 5, 4, &["--gauge", "L2", "--tau", "1", "--rho", "0.01"]);
    let inst = Instance::load(&inst_path).unwrap();
    for m in ["f1", "f2"] {
        let (code, out, err) = run(&["solve", s(&inst_path), "--method", m, "--out", s(dir.path()), "--verify"]);
        assert_eq!(code, 0, "{out}{err}");
    }
    let f1 = read_solution(&dir.path().join("tiny5-4-f1.toml"));
    let f2 = read_solution(&dir.path().join("tiny5-4-f2.toml"));
    assert_eq!(f1.method, Method::F1);
    assert!((f1.objective - f2.objective).abs() <= 1e-4 * f2.objective.abs().max(1.0));
    assert!((f2.costs.total - f2.objective).abs() <= 1e-6 * f2.objective.max(1.0));

    let geo = std::fs::read_to_string(dir.path().join("tiny5-4-f2-geometry.csv")).unwrap();
    let rows: Vec<Vec<&str>> = geo.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let disks: Vec<&Vec<&str>> = rows.iter().filter(|r| r[0] == "neighborhood").collect();
    assert_eq!(disks.len(), f2.hubs.len());
    for d in disks {
        let k: usize = d[1].parse().unwrap();
        assert_eq!(d[7], "disk");
        assert!(f2.solution.open[k]);
        assert_eq!(d[6].parse::<f64>().unwrap(), f2.solution.radius[k]);
        let (cx, cy): (f64, f64) = (d[2].parse().unwrap(), d[3].parse().unwrap());
        assert_eq!((cx, cy), (inst.node(k).0[0], inst.node(k).0[1]));
    }
    assert_eq!(rows.iter().filter(|r| r[0] == "node").count(), 5);
}

#[test]
fn zero_tau_dump_has_zero_radii() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = tiny_scenario(dir.path(), 4, 2, &["--tau", "0", "--gauge", "L1"]);
    let (code, _, err) = run(&["solve", s(&inst_path), "--out", s(dir.path())]);
    assert_eq!(code, 0, "{err}");
    let geo = std::fs::read_to_string(dir.path().join("tiny4-2-f2-geometry.csv")).unwrap();
    let radii: Vec<f64> = geo
        .lines()
        .filter(|l| l.starts_with("neighborhood,"))
        .map(|l| l.split(',').nth(6).unwrap().parse().unwrap())
        .collect();
    assert!(!radii.is_empty());
    assert!(radii.iter().all(|&r| r == 0.0), "{radii:?}");
    assert!(geo.contains(",diamond"));
}

#[test]
fn solve_reports_time_limit_as_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = dir.path().join("ap20.toml");
    let (code, _, _) = run(&["convert", s(&data("ap20.txt")), "--format", "AP", s(&inst_path), "--alpha", "0.8"]);
    assert_eq!(code, 0);
    let (code, _, err) = run(&["solve", s(&inst_path), "--time-limit", "0.5", "--out", s(dir.path())]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("TIME_LIMIT"), "{err}");
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p
}

const TINY_GRID: &str = r#"
[grid]
alphas = [0.5, 1.0]
taus = [1.0]
rhos = [0.1]
gauges = ["L2", "LINF"]
norm_pairs = [["L2", "L2"], ["L1", "LINF"]]

[[datasets]]
tiny = { n = 4, seed = 11 }

[[datasets]]
name = "T5"
tiny = { n = 5, seed = 12 }
"#;

#[test]
fn tiny_batch_methods_agree_and_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("out = \"out\"\nwrite_solutions = true\n{TINY_GRID}"));
    let (code, out, err) = run(&["run", s(&cfg)]);
    assert_eq!(code, 0, "{out}{err}");
    let recs = read_records(std::fs::File::open(dir.path().join("out/runs.csv")).unwrap()).unwrap();
    // 2 datasets x (2 pairs at 0.5 + 1 strict pair at 1) x 2 gauges x 2 methods
    assert_eq!(recs.len(), 24);
    assert!(recs.iter().all(|r| r.status == RunStatus::Optimal));
    for f1 in recs.iter().filter(|r| r.method == Method::F1) {
        let f2 = recs.iter().find(|r| r.method == Method::F2 && r.scenario_key() == f1.scenario_key()).unwrap();
        let (a, b) = (f1.objective.unwrap(), f2.objective.unwrap());
        assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0), "{}: {a} vs {b}", f1.scenario_key());
        assert_eq!(f1.cuts, 0);
    }
    for name in ["summary.csv", "times.csv", "cuts.csv"] {
        assert!(dir.path().join("out").join(name).exists(), "{name}");
    }
    assert_eq!(std::fs::read_dir(dir.path().join("out/solutions")).unwrap().count(), 24);

    let (code, _, _) = run(&["run", s(&cfg), "--out", s(&dir.path().join("again"))]);
    assert_eq!(code, 0);
    let again = read_records(std::fs::File::open(dir.path().join("again/runs.csv")).unwrap()).unwrap();
    let strip = |rs: &[hubloc_cli::RunRecord]| -> Vec<(String, Method, Option<f64>, usize)> {
        rs.iter().map(|r| (r.scenario_key(), r.method, r.objective, r.cuts)).collect()
    };
    assert_eq!(strip(&recs), strip(&again));
}

#[test]
fn one_second_limit_on_ap20_counts_as_unsolved() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "out = \"out\"\ntime_limit = 1.0\nmethods = [\"F2\"]\n\n[grid]\nalphas = [0.8]\ntaus = [1.5]\nrhos = [0.01, 0.1]\ngauges = [\"L2\"]\nnorm_pairs = [[\"L1\", \"L2\"]]\n\n[[datasets]]\npath = \"{}\"\nformat = \"AP\"\n",
        s(&data("ap20.txt"))
    );
    let cfg = write_config(dir.path(), &body);
    let (code, _, err) = run(&["run", s(&cfg)]);
    assert_eq!(code, 0, "{err}");
    let recs = read_records(std::fs::File::open(dir.path().join("out/runs.csv")).unwrap()).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().any(|r| r.status == RunStatus::TimeLimit));
    assert!(recs.iter().all(|r| r.n == 20 && r.dataset == "AP"));
    let times = std::fs::read_to_string(dir.path().join("out/times.csv")).unwrap();
    let header: Vec<&str> = times.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = times.lines().nth(1).unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "L2_US2").unwrap();
    let unsolved = recs.iter().filter(|r| !r.status.solved()).count();
    assert_eq!(row[col], format!("{}%", 100 * unsolved / 2));
}

#[test]
fn failing_scenario_is_recorded_without_aborting() {
    let dir = tempfile::tempdir().unwrap();
    let body = "out = \"out\"\nmethods = [\"F2\"]\n\n[grid]\nalphas = [0.5]\ntaus = [-1.0, 1.0]\nrhos = [0.1]\ngauges = [\"L2\"]\nnorm_pairs = [[\"L2\", \"L2\"]]\n\n[[datasets]]\ntiny = { n = 4, seed = 3 }\n";
    let cfg = write_config(dir.path(), body);
    let (code, out, err) = run(&["run", s(&cfg)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("1 errors"), "{out}");
    let recs = read_records(std::fs::File::open(dir.path().join("out/runs.csv")).unwrap()).unwrap();
    let statuses: Vec<RunStatus> = recs.iter().map(|r| r.status).collect();
    assert!(statuses.contains(&RunStatus::Error) && statuses.contains(&RunStatus::Optimal), "{statuses:?}");
}

#[test]
fn aggregate_rebuilds_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("out = \"out\"\nmethods = [\"F2\"]\n{TINY_GRID}"));
    assert_eq!(run(&["run", s(&cfg)]).0, 0);
    let cuts_before = std::fs::read_to_string(dir.path().join("out/cuts.csv")).unwrap();
    let (code, _, err) = run(&["aggregate", s(&dir.path().join("out/runs.csv")), "--out", s(&dir.path().join("tables"))]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(std::fs::read_to_string(dir.path().join("tables/cuts.csv")).unwrap(), cuts_before);
    // only the strict pair (L1, LINF) appears, at both alphas
    assert_eq!(cuts_before.lines().count(), 3);
}
