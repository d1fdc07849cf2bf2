use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nashmatch"))
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const INTERIOR: &str = r#"{"kind":"OneSidedLinear","n":2,"utilities":[[1.0,0.2],[1.0,0.3]]}"#;
const THREE: &str =
    r#"{"kind":"OneSidedLinear","n":3,"utilities":[[1.0,0.9,0.8],[1.0,0.7,0.9],[0.8,1.0,0.95]],"c":[0.1,0.1,0.1]}"#;

fn without_wall_time(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_time").expect("wall_time present");
    v
}

#[test]
fn solve_is_deterministic_apart_from_wall_time() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "i.json", THREE);
    for solver in ["cgd", "mwu"] {
        let outs: Vec<PathBuf> = (0..2)
            .map(|k| {
                let out = dir.path().join(format!("{solver}{k}.json"));
                let o = run(&[
                    "solve",
                    inst.to_str().unwrap(),
                    "--solver",
                    solver,
                    "--certify",
                    "--round",
                    "--out",
                    out.to_str().unwrap(),
                ]);
                assert_eq!(code(&o), 0, "{}", stderr(&o));
                out
            })
            .collect();
        let (a, b) = (fs::read_to_string(&outs[0]).unwrap(), fs::read_to_string(&outs[1]).unwrap());
        let strip = |s: &str| s.lines().filter(|l| !l.contains("\"wall_time\"")).collect::<Vec<_>>().join("\n");
        assert_eq!(strip(&a), strip(&b), "{solver}");
    }
}

#[test]
fn solve_writes_allocation_and_light_certificate() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "i.json", INTERIOR);
    let out = dir.path().join("r.json");
    let o = run(&["solve", inst.to_str().unwrap(), "--eps", "1e-4", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = without_wall_time(&out);
    assert_eq!(v["solver"], "cgd");
    assert_eq!(v["converged"], true);
    let x = v["allocation"].as_array().unwrap();
    assert_eq!(x.len(), 2);
    let cert = v["certificate"].as_object().unwrap();
    assert!(cert.contains_key("objective") && cert.contains_key("feasibility"));
    assert!(!cert.contains_key("kkt"));
    assert_eq!(cert["feasibility"]["passed"], true);
}

#[test]
fn exit_code_for_iteration_cap() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "i.json", INTERIOR);
    let out = dir.path().join("r.json");
    let o =
        run(&["solve", inst.to_str().unwrap(), "--eps", "1e-6", "--max-iters", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let v = without_wall_time(&out);
    assert_eq!(v["converged"], false);
    assert_eq!(v["iterations"], 3);
}

#[test]
fn exit_code_for_infeasible_instance() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        dir.path(),
        "i.json",
        r#"{"kind":"OneSidedLinear","n":2,"utilities":[[1.0,0.0],[0.0,1.0]],"c":[1.0,1.0]}"#,
    );
    for solver in ["cgd", "mwu"] {
        let o = run(&["solve", inst.to_str().unwrap(), "--solver", solver]);
        assert_eq!(code(&o), 2, "{solver}: {}", stderr(&o));
    }
}

#[test]
fn malformed_instance_names_the_field() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "i.json", r#"{"kind":"OneSidedLinear","n":2,"utilities":[[1.0,0.5]]}"#);
    let o = run(&["solve", inst.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("utilities"), "{}", stderr(&o));

    let o = run(&["solve", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn mwu_rejects_two_sided_kind() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        dir.path(),
        "i.json",
        r#"{"kind":"TwoSidedSPLC","n":2,
            "segments":[{"i":0,"j":0,"u":[1.0],"l":[1.0]},{"i":0,"j":1,"u":[0.5],"l":[1.0]},
                        {"i":1,"j":0,"u":[0.5],"l":[1.0]},{"i":1,"j":1,"u":[1.0],"l":[1.0]}],
            "job_utilities":[[[1.0],[0.5]],[[0.5],[1.0]]]}"#,
    );
    let o = run(&["solve", inst.to_str().unwrap(), "--solver", "mwu"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("mwu unsupported for kind"), "{}", stderr(&o));
    let o = run(&["solve", inst.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn certify_and_round_produce_full_output() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "i.json", THREE);
    let out = dir.path().join("r.json");
    let o = run(&[
        "solve",
        inst.to_str().unwrap(),
        "--solver",
        "mwu",
        "--certify",
        "--round",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = without_wall_time(&out);
    for key in ["kkt", "proportionality", "best_response", "dual_source"] {
        assert!(v["certificate"].get(key).is_some(), "missing {key}");
    }
    assert!(v["duals"]["p"].is_array());
    let m = v["sampled_matching"].as_array().unwrap();
    assert_eq!(m.len(), 3);

    let lottery: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.lottery.json")).unwrap()).unwrap();
    let terms = lottery.as_array().unwrap();
    let total: f64 = terms.iter().map(|t| t["weight"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(terms.len() <= 5);
}

#[test]
fn trace_headers() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "i.json", INTERIOR);
    let cases = [
        ("cgd", "t,psi,fw_gap,min_utility_minus_c,step_size"),
        ("mwu", "t,sigma,phi,max_row_overload,max_col_overload,objective_of_running_average"),
    ];
    for (solver, header) in cases {
        let trace = dir.path().join(format!("{solver}.csv"));
        let o = run(&["solve", inst.to_str().unwrap(), "--solver", solver, "--trace", trace.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = fs::read_to_string(&trace).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(header));
        let first = lines.next().expect("at least one row");
        assert_eq!(first.split(',').count(), header.split(',').count());
    }
}

const BENCH_HEADER: &str = "n,seed,solver,eps,iterations,wall_time,final_gap,final_overload";

#[test]
fn empty_bench_spec_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "s.json", "{}");
    let o = run(&["bench", spec.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim_end(), BENCH_HEADER);
}

#[test]
fn bench_rows_are_deterministic_and_mwu_runs_default_rounds() {
    let dir = TempDir::new().unwrap();
    let spec = write(
        dir.path(),
        "s.json",
        r#"{"kind":"OneSidedLinear","n":[3],"seeds":[0,1],"solvers":["mwu","cgd"],"eps":[0.2]}"#,
    );
    let rows = |name: &str| -> Vec<Vec<String>> {
        let out = dir.path().join(name);
        let o = run(&["bench", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = fs::read_to_string(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(BENCH_HEADER));
        lines.map(|l| l.split(',').map(str::to_owned).collect()).collect()
    };
    let (a, b) = (rows("a.csv"), rows("b.csv"));
    assert_eq!(a.len(), 4);
    let drop_time = |r: &Vec<Vec<String>>| -> Vec<Vec<String>> {
        r.iter().map(|row| row.iter().enumerate().filter(|(k, _)| *k != 5).map(|(_, v)| v.clone()).collect()).collect()
    };
    assert_eq!(drop_time(&a), drop_time(&b));
    // ⌈8·2n·ln(2n)/ε²⌉ for n = 3, ε = 0.2.
    let default_rounds = (8.0 * 6.0 * 6f64.ln() / 0.04f64).ceil() as u64;
    for row in &a {
        if row[2] == "mwu" {
            assert!(row[4].parse::<u64>().unwrap() <= default_rounds);
            assert!(row[6].is_empty());
        } else {
            assert!(row[6].parse::<f64>().unwrap() <= 0.2);
        }
    }
}

#[test]
fn bench_rejects_unknown_fields() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "s.json", r#"{"sizes":[3]}"#);
    let o = run(&["bench", spec.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("sizes"), "{}", stderr(&o));
}
