//! End-to-end runs of the `besov` binary: exit codes, error messages and
//! agreement of the data files with direct library calls.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use besov_core::doe::{solve_principal, ProblemSpec};
use besov_core::partition::build_dyadic_system;
use besov_core::spaces::{besov_norm, BesovParams};
use besov_core::{Grid, SampledFunction};
use serde_json::{json, Value};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn besov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_besov")).args(args).output().unwrap()
}

fn run_config(config: &Path, out: &Path) -> Output {
    besov(&["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn run_json(cfg: Value, dir: &Path) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    run_config(&path, &dir.join("out"))
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_command_in_config_lists_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_json(json!({ "command": "check-everything", "seed": 1 }), tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("check-everything"), "{err}");
    for name in [
        "besov-norm",
        "check-mikhlin",
        "solve-degenerate",
        "verify-interpolation",
    ] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn unknown_command_on_command_line_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("check-mikhlin-identity.json");
    let out = tmp.path().join("out");
    let o = besov(&[
        "frobnicate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("valid subcommands"));
}

#[test]
fn command_line_and_config_must_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("check-mikhlin-identity.json");
    let out = tmp.path().join("out");
    let o = besov(&[
        "solve-dop",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = besov(&[
        "check-mikhlin",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn missing_arguments_exit_1_and_help_exits_0() {
    assert_eq!(besov(&[]).status.code(), Some(1));
    assert_eq!(besov(&["--help"]).status.code(), Some(0));
}

#[test]
fn schema_violations_name_the_key() {
    let cases = [
        (
            json!({ "command": "check-mikhlin", "seed": 1, "params": { "symbol": "identity", "pp": 2 } }),
            "params",
        ),
        (
            json!({ "command": "check-mikhlin", "seed": 1, "colour": "blue" }),
            "colour",
        ),
        (
            json!({ "command": "check-mikhlin", "params": { "symbol": "identity" } }),
            "seed",
        ),
        (
            json!({ "command": "check-mikhlin", "seed": 1, "ensemble": { "seed": 3 } }),
            "ensemble.seed",
        ),
        (
            json!({ "command": "check-mikhlin", "seed": 1, "ensemble": { "sise": 3 } }),
            "sise",
        ),
        (
            json!({ "command": "solve-full", "seed": 1, "params": { "problem": { "a": [[[1, 0]]], "lambda": 1, "a1": { "kind": "gaussian", "amplitude": 0.1, "wdth": 2 } } } }),
            "params.problem.a1",
        ),
        (
            json!({ "command": "check-mikhlin", "seed": 1, "grid": { "points": 1000 } }),
            "grid",
        ),
    ];
    for (cfg, key) in cases {
        let tmp = tempfile::tempdir().unwrap();
        let o = run_json(cfg.clone(), tmp.path());
        assert_eq!(o.status.code(), Some(1), "{cfg}");
        let err = stderr(&o);
        assert!(err.contains(key), "{cfg}: {err}");
    }
}

#[test]
fn failed_check_exits_2_and_still_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("check-mikhlin-jump.json"), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let r = report(tmp.path());
    assert_eq!(r["pass"], json!(false));
    assert!(r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c["pass"] == json!(false)));
}

#[test]
fn mikhlin_identity_reports_unit_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("check-mikhlin-identity.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(tmp.path());
    assert_eq!(r["result"]["symbols"][0]["a_hat"].as_f64(), Some(1.0));
    assert_eq!(r["artifact"]["schema_version"], json!(1));
    assert!(r["metadata"]["timestamp"].is_u64());
}

#[test]
fn solve_dop_matches_library_call() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("solve-dop-scalar-baseline.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(tmp.path());
    assert!(r["result"]["solve"]["residual"].as_f64().unwrap() <= 1e-10);

    let problem = ProblemSpec::scalar(1.0, 1.0).build(&Grid::default_1d()).unwrap();
    let expected = solve_principal(&problem).unwrap();
    let mut bytes = Vec::new();
    expected.u.write_csv(&mut bytes).unwrap();
    assert_eq!(std::fs::read(tmp.path().join("solution.csv")).unwrap(), bytes);
}

#[test]
fn block_spectrum_matches_norm_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("besov-norm-gaussian.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let grid = Grid::default_1d();
    let f = SampledFunction::scalar(grid, |x| (-x[0] * x[0]).exp()).unwrap();
    let norm = besov_norm(
        &f,
        &BesovParams::new(1.0, 2.0, 2.0),
        &build_dyadic_system(&grid).unwrap(),
    )
    .unwrap();
    let text = std::fs::read_to_string(tmp.path().join("block_spectrum.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("member,k,contrib"));
    let rows: Vec<(usize, f64)> = lines
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            assert_eq!(cells[0], "0");
            (cells[1].parse().unwrap(), cells[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), norm.blocks.len());
    for (row, block) in rows.iter().zip(&norm.blocks) {
        assert_eq!(row.0, block.k);
        assert_eq!(row.1, block.contrib);
    }
}

#[test]
fn empty_sweeps_write_header_only_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("solve-full-zero-coefficient.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(tmp.path().join("contraction.csv")).unwrap(),
        "lambda,q_hat,iterations,residual\n"
    );
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("verify-coercivity-empty.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(tmp.path().join("coercivity.csv")).unwrap(),
        "lambda,c_hat,c_hat_derivative,c_hat_refined,sigma_sup,sigma_m_hat\n"
    );
}

#[test]
fn coercivity_csv_has_one_row_per_lambda_in_increasing_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "command": "verify-coercivity",
        "seed": 5,
        "grid": { "half_width": 32, "points": 1024 },
        "ensemble": { "size": 4, "max_frequency": 8 },
        "params": { "problem": { "a": [[[1, 0]]], "lambda": 1 }, "lambdas": [100, 1, 10] },
    });
    let o = run_json(cfg, tmp.path());
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("out/coercivity.csv")).unwrap();
    let lambdas: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(lambdas, vec![1.0, 10.0, 100.0]);
}

#[test]
fn repeated_runs_are_byte_identical_apart_from_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("check-convolution-random.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run_config(&cfg, &a).status.code(), run_config(&cfg, &b).status.code());
    let strip = |d: &Path| {
        let mut v = report(d);
        v.as_object_mut().unwrap().remove("metadata");
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(strip(&a), strip(&b));
    {
        let name = "convolution.csv";
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap()
        );
    }
}

#[test]
fn a_different_seed_changes_random_kernels() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg: Value =
        serde_json::from_str(&std::fs::read_to_string(configs().join("check-convolution-random.json")).unwrap())
            .unwrap();
    cfg["params"]["kernels"][0]["count"] = json!(2);
    let a = tmp.path().join("a");
    std::fs::create_dir_all(&a).unwrap();
    run_json(cfg.clone(), &a);
    cfg["seed"] = json!(99);
    let b = tmp.path().join("b");
    std::fs::create_dir_all(&b).unwrap();
    run_json(cfg, &b);
    assert_ne!(
        std::fs::read(a.join("out/convolution.csv")).unwrap(),
        std::fs::read(b.join("out/convolution.csv")).unwrap()
    );
}
