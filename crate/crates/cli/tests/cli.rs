use std::path::Path;
use std::process::{Command, Output};

use vrp2l_cli::Summary;

fn vrp2l(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrp2l")).args(args).output().expect("binary runs")
}

fn summary(dir: &Path) -> Summary {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn gen_solve_validate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = tmp.path().join("inst.json");
    let run = tmp.path().join("run");
    let out = vrp2l(&["gen", "--preset", "sized", "--shipments", "20", "--seed", "3", "-o", inst.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = vrp2l(&["solve", inst.to_str().unwrap(), "-o", run.to_str().unwrap(), "--iterations", "10"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["run.json", "solution.json", "convergence.csv", "summary.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let s = summary(&run);
    let post = s.postopt.unwrap();
    assert!(s.initial >= s.tabu - 1e-9 && s.tabu >= post - 1e-9);
    let csv = std::fs::read_to_string(run.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("iteration,elapsed_ms,current_mileage,best_mileage"));
    assert_eq!(csv.lines().count(), 1 + 1 + s.iterations);

    let out = vrp2l(&["validate", inst.to_str().unwrap(), run.join("solution.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "feasible");
}

#[test]
fn iteration_budget_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = tmp.path().join("inst.json");
    vrp2l(&["gen", "--shipments", "25", "--seed", "9", "-o", inst.to_str().unwrap()]);
    let mut docs = Vec::new();
    for k in 0..2 {
        let run = tmp.path().join(format!("run{k}"));
        let out = vrp2l(&["solve", inst.to_str().unwrap(), "-o", run.to_str().unwrap(), "--iterations", "8"]);
        assert!(out.status.success());
        docs.push(std::fs::read_to_string(run.join("solution.json")).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
}

#[test]
fn no_postopt_leaves_the_column_out() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = tmp.path().join("inst.json");
    let run = tmp.path().join("run");
    vrp2l(&["gen", "--shipments", "15", "--seed", "4", "-o", inst.to_str().unwrap()]);
    let out = vrp2l(&["solve", inst.to_str().unwrap(), "-o", run.to_str().unwrap(), "--iterations", "3", "--no-postopt"]);
    assert!(out.status.success());
    assert!(summary(&run).postopt.is_none());
    let text = std::fs::read_to_string(run.join("summary.json")).unwrap();
    assert!(!text.contains("postopt"));
}

#[test]
fn input_errors_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(vrp2l(&["solve", bad.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(vrp2l(&["solve", "/no/such/file.json"]).status.code(), Some(3));
    assert_eq!(vrp2l(&["solve"]).status.code(), Some(3));
}

#[test]
fn broken_solution_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = tmp.path().join("inst.json");
    let run = tmp.path().join("run");
    vrp2l(&["gen", "--shipments", "15", "--seed", "5", "-o", inst.to_str().unwrap()]);
    vrp2l(&["solve", inst.to_str().unwrap(), "-o", run.to_str().unwrap(), "--iterations", "1"]);
    let path = run.join("solution.json");
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    doc["total_mileage"] = serde_json::json!(1.0);
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = vrp2l(&["validate", inst.to_str().unwrap(), path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("structure"));
}

#[test]
fn oracle_solves_tiny_instances() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = tmp.path().join("inst.json");
    let sol = tmp.path().join("opt.json");
    vrp2l(&["gen", "--preset", "tiny", "--shipments", "3", "--trucks", "2", "--seed", "1", "-o", inst.to_str().unwrap()]);
    let out = vrp2l(&["oracle", inst.to_str().unwrap(), "-o", sol.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("optimal mileage"));
    let out = vrp2l(&["validate", inst.to_str().unwrap(), sol.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bench_pair_writes_a_ranking() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("bench");
    let out = vrp2l(&[
        "bench", "--matrix", "wb-nb", "--shipments", "15", "--seeds", "1,2,3", "--iterations", "3", "-o",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ranking = std::fs::read_to_string(dir.join("ranking.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 3);
    let runs = std::fs::read_to_string(dir.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 7);
    assert_eq!(std::fs::read_dir(dir.join("runs")).unwrap().count(), 6);
}
