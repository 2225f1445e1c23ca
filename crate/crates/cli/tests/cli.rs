use std::path::Path;
use std::process::{Command, Output};

use stochkep_core::io::{read_instance, write_instance, MatchingFile};

fn stochkep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochkep"))
        .args(args)
        .env("STOCHKEP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_matching(p: &Path) -> MatchingFile {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn generate_then_solve_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("pool.json");
    let out = stochkep(&[
        "generate", "--pairs", "14", "--ndds", "2", "--density", "0.25", "--seed", "5", "--out", path_str(&inst),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let graph = read_instance(&inst).unwrap();
    assert_eq!(graph.num_vertices(), 16);

    for method in ["kep", "kep-ip", "kep-np", "cvar", "bnp"] {
        let m = dir.path().join(format!("{method}.json"));
        let out = stochkep(&["solve", "--instance", path_str(&inst), "--method", method, "--out", path_str(&m)]);
        assert!(out.status.success(), "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let file = read_matching(&m);
        assert!(file.optimal);
        file.validate_against(&graph).unwrap();
        assert_eq!(file.objective_loss.is_some(), method == "cvar");
    }
    let np = read_matching(&dir.path().join("kep-np.json"));
    let bnp = read_matching(&dir.path().join("bnp.json"));
    assert!((np.objective_value - bnp.objective_value).abs() <= 1e-6 * np.objective_value.max(1.0));
}

#[test]
fn figure1_matchings() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("fig.json");
    write_instance(&stochkep_core::fixtures::figure1(), &inst).unwrap();
    let m = dir.path().join("m.json");
    let out = stochkep(&[
        "solve", "--instance", path_str(&inst), "--method", "kep-np", "--chain-cap", "2", "--out", path_str(&m),
    ]);
    assert!(out.status.success());
    let file = read_matching(&m);
    assert!((file.objective_value - 5.67).abs() < 1e-9);
    assert_eq!(file.cycles, vec![vec![2, 3]]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("KEP-NP"));
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("x.json");
    let empty = stochkep(&["generate", "--pairs", "0", "--out", path_str(&inst)]);
    assert_eq!(empty.status.code(), Some(2));
    let bad_density = stochkep(&["generate", "--pairs", "5", "--density", "1.5", "--out", path_str(&inst)]);
    assert_eq!(bad_density.status.code(), Some(2));
    let unknown = stochkep(&["solve", "--instance", path_str(&inst), "--method", "magic", "--out", "m.json"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(!inst.exists());
}

#[test]
fn bench_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("bench");
    let out = stochkep(&[
        "bench", "--graphs", "2", "--size", "16", "--realizations", "5", "--methods", "kep,kep-np", "--seed", "3",
        "--outdir", path_str(&outdir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["cells.csv", "summary.csv", "timing.csv", "boxplot.json", "config.json"] {
        assert!(outdir.join(f).exists(), "missing {f}");
    }
    let cells = std::fs::read_to_string(outdir.join("cells.csv")).unwrap();
    // header + 2 graphs × 2 methods × 5 realizations
    assert_eq!(cells.lines().count(), 21);
}
