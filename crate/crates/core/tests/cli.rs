//! End-to-end checks of the `binmargin` binary: exit codes, output
//! formats, config precedence, dry runs, and byte determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binmargin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binmargin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!(
            "binmargin-it-{tag}-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        std::fs::remove_dir_all(&self.0).ok();
    }
}

fn write_margins(path: &Path, r: &[usize], c: &[usize]) {
    let doc = serde_json::json!({ "r": r, "c": c });
    std::fs::write(path, serde_json::to_string(&doc).unwrap()).unwrap();
}

#[test]
fn typical_solves_block_params() {
    let out = binmargin(&["typical", "--params", "8,0.5,1.2,0.5"]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    for key in ["z", "row_duals", "col_duals", "entropy", "residual"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert!(doc["residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn count_infeasible_margins_is_zero_and_exit_zero() {
    let tmp = TempDir::new("count0");
    let margins = tmp.path("m.json");
    write_margins(&margins, &[2, 2], &[3, 1]);
    let out = binmargin(&["count", "--margins", margins.to_str().unwrap()]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(doc["count"], "0");
}

#[test]
fn count_small_example() {
    let tmp = TempDir::new("count5");
    let margins = tmp.path("m.json");
    write_margins(&margins, &[2, 1, 1], &[2, 1, 1]);
    let out = binmargin(&["count", "--margins", margins.to_str().unwrap()]);
    let doc: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(doc["count"], "5");
    assert!((doc["log_count"].as_f64().unwrap() - 5f64.ln()).abs() < 1e-10);
}

#[test]
fn sample_mcmc_infeasible_margins_exits_two() {
    let tmp = TempDir::new("infeasible");
    let margins = tmp.path("m.json");
    write_margins(&margins, &[2, 2], &[3, 1]);
    let out = binmargin(&[
        "sample", "--mcmc", "--margins", margins.to_str().unwrap(), "-k", "3",
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_str(&out));
    let err_line = stderr_str(&out);
    let json_line = err_line.lines().last().unwrap();
    let doc: serde_json::Value = serde_json::from_str(json_line).unwrap();
    assert_eq!(doc["exit_code"], 2);
}

#[test]
fn sample_prints_effective_seed() {
    let tmp = TempDir::new("seedprint");
    let margins = tmp.path("m.json");
    write_margins(&margins, &[1, 1], &[1, 1]);
    let out = binmargin(&[
        "sample", "--exact", "--margins", margins.to_str().unwrap(), "-k", "2", "--seed", "9",
    ]);
    assert!(out.status.success());
    assert!(stderr_str(&out).contains("effective seed: 9"));
    // JSONL: one table per line.
    let text = stdout_str(&out);
    assert_eq!(text.lines().count(), 2);
    for line in text.lines() {
        let table: Vec<Vec<u8>> = serde_json::from_str(line).unwrap();
        assert_eq!(table.len(), 2);
    }
}

#[test]
fn verify_small_margins_exits_zero() {
    let tmp = TempDir::new("verify");
    let margins = tmp.path("m.json");
    write_margins(&margins, &[2, 1, 1], &[2, 1, 1]);
    let out = binmargin(&["verify", "--margins", margins.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(doc["table_count"], 5);
    assert!(doc["max_log_density_deviation"].as_f64().unwrap() < 1e-8);
}

#[test]
fn dry_run_never_creates_files_and_warns_out_of_regime() {
    let tmp = TempDir::new("dryrun");
    let out_file = tmp.path("never.json");
    let out = binmargin(&[
        "count",
        "--params",
        "24,0.5,3,0.5",
        "--out",
        out_file.to_str().unwrap(),
        "--dry-run",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    assert!(!out_file.exists(), "--dry-run must not create files");
    let doc: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(doc["command"], "count");
    assert_eq!(doc["regimes"]["regimes"].as_array().unwrap().len(), 0);
    assert!(stderr_str(&out).contains("no block-limit hypothesis"));
}

#[test]
fn config_file_precedence_via_binary() {
    let tmp = TempDir::new("config");
    let cfg = tmp.path("run.json");
    std::fs::write(&cfg, r#"{"seed": 1, "params": "4,0.5,1,0.5", "k": 3}"#).unwrap();
    let out = binmargin(&[
        "sample", "--exact", "--config", cfg.to_str().unwrap(), "--seed", "7",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    assert!(stderr_str(&out).contains("effective seed: 7"));
    assert_eq!(stdout_str(&out).lines().count(), 3);
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = TempDir::new("badkey");
    let cfg = tmp.path("run.json");
    std::fs::write(&cfg, r#"{"seeed": 1}"#).unwrap();
    let out = binmargin(&[
        "count", "--params", "4,0.5,1,0.5", "--config", cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_str(&out).contains("seeed"));
}

#[test]
fn enumerate_jsonl_matches_expected_order() {
    let tmp = TempDir::new("enum");
    let margins = tmp.path("m.json");
    write_margins(&margins, &[1, 1], &[1, 1]);
    let out = binmargin(&["enumerate", "--margins", margins.to_str().unwrap()]);
    let text = stdout_str(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, vec!["[[1,0],[0,1]]", "[[0,1],[1,0]]"]);
}

#[test]
fn marginal_csv_has_one_row_per_block() {
    let out = binmargin(&[
        "marginal", "--params", "4,0.5,1,0.5", "--sampler", "exact", "-k", "200",
        "--seed", "3", "--format", "csv",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let text = stdout_str(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n,block,k,empirical,target,tv,stderr");
    let rest: Vec<&str> = lines.collect();
    assert_eq!(rest.len(), 3);
    assert!(rest[0].starts_with("4,TL,"));
    assert!(rest[1].starts_with("4,SIDE,"));
    assert!(rest[2].starts_with("4,BR,"));
}

#[test]
fn seeded_commands_are_byte_identical_across_runs() {
    let tmp = TempDir::new("determinism");
    let margins = tmp.path("m.json");
    write_margins(&margins, &[2, 1, 1], &[2, 1, 1]);
    let m = margins.to_str().unwrap().to_owned();

    let cases: Vec<Vec<&str>> = vec![
        vec!["sample", "--exact", "--margins", &m, "-k", "20", "--seed", "11"],
        vec!["sample", "--mcmc", "--margins", &m, "-k", "20", "--seed", "11"],
        vec!["sample", "--rejection", "--margins", &m, "-k", "20", "--seed", "11"],
        vec!["marginal", "--params", "4,0.5,1,0.5", "--sampler", "exact", "-k", "500", "--seed", "2"],
        vec!["typical", "--margins", &m],
        vec!["count", "--margins", &m],
    ];
    for args in cases {
        let a = binmargin(&args);
        let b = binmargin(&args);
        assert!(a.status.success(), "{:?} failed: {}", args, stderr_str(&a));
        assert_eq!(a.stdout, b.stdout, "output differs for {args:?}");
    }
}

#[test]
fn out_file_is_written_exactly() {
    let tmp = TempDir::new("outfile");
    let margins = tmp.path("m.json");
    let out_a = tmp.path("a.jsonl");
    let out_b = tmp.path("b.jsonl");
    write_margins(&margins, &[2, 1, 1], &[2, 1, 1]);
    for out_path in [&out_a, &out_b] {
        let out = binmargin(&[
            "sample",
            "--exact",
            "--margins",
            margins.to_str().unwrap(),
            "-k",
            "10",
            "--seed",
            "5",
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        assert!(stdout_str(&out).is_empty());
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn enumerate_cap_exceeded_exits_four() {
    let tmp = TempDir::new("cap");
    let margins = tmp.path("m.json");
    write_margins(&margins, &[1, 1], &[1, 1]);
    let out = binmargin(&[
        "enumerate", "--margins", margins.to_str().unwrap(), "--cap", "1",
    ]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", stderr_str(&out));
}

#[test]
fn lln_rejects_bad_hypotheses_with_usage_exit() {
    let out = binmargin(&[
        "lln", "--params", "8,0.8,1.2,0.5", "--which", "side", "-k", "5",
        "--n-sweep", "4,6", "--sampler", "exact",
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr_str(&out));
}

#[test]
fn lln_csv_has_one_row_per_sweep_point() {
    let out = binmargin(&[
        "lln", "--params", "6,0.5,1.2,0.5", "--which", "br", "--n-sweep", "4,6",
        "--sampler", "exact", "-k", "150", "--seed", "2", "--format", "csv",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let text = stdout_str(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,which,k,mean,std,target,gap");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("4,"));
    assert!(lines[2].starts_with("6,"));
}

#[test]
fn joint_exact_includes_independence_gap() {
    let out = binmargin(&[
        "joint", "--params", "4,0.5,1,0.5", "--block", "br", "--cells", "2",
        "--sampler", "exact", "-k", "400", "--seed", "8",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert!(doc["exact_independence_gap"].as_f64().is_some());
    assert_eq!(doc["empirical"].as_array().unwrap().len(), 4);
}
