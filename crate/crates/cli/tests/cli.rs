use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gmmsi"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|r| r.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn rank_table_reproduces_pair_ranks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("table1.toml");
    let o = run(&["rank-table", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let comps = std::fs::read_to_string(dir.path().join("components.csv")).unwrap();
    assert_eq!(comps.lines().next(), Some("i,k,r_x1,r_x2,r_x"));
    assert!(comps.lines().skip(1).all(|l| l.ends_with(",7,6,9")));
    let pairs = std::fs::read_to_string(dir.path().join("pairs.csv")).unwrap();
    for row in ["1,1,1,2,8,8,12,", "1,1,2,1,10,11,17,", "1,1,2,2,11,11,18,", "1,2,2,1,9,10,15,", "1,2,2,2,10,11,17,", "2,1,2,2,8,8,12,"] {
        assert!(pairs.lines().any(|l| l.starts_with(row)), "missing {row}");
    }
    assert_eq!(files(dir.path()), ["components.csv", "manifest.json", "pairs.csv"]);
}

#[test]
fn verdict_reports_transition_and_diversity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("table1.toml");
    let o = run(&[
        "verdict", "--config", cfg.to_str().unwrap(), "--m1", "6", "--m2", "4", "--task", "classify_si", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "outcome=phase_transition d=0.5");
    let csv = std::fs::read_to_string(dir.path().join("verdict.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.starts_with("side_info,6,4,phase_transition,"));
    assert!(row.ends_with(",0.5"));

    let o = run(&[
        "verdict", "--config", cfg.to_str().unwrap(), "--m1", "6", "--m2", "4", "--theorem", "gmm_sufficient",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("verdict.csv")).unwrap();
    assert_eq!(csv, "theorem,m1,m2,outcome,binding_i,binding_k\ngmm_sufficient,6,4,phase_transition,,\n");
}

#[test]
fn region_map_staircase() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("gauss334.toml");
    let o = run(&[
        "region-map", "--config", cfg.to_str().unwrap(), "--theorem", "gaussian", "--m1", "0..5", "--m2", "0..5",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("region.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 36);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let (m1, m2): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let first = match m2 {
            0 | 1 => 3,
            2 => 2,
            _ => 1,
        };
        let want = if m1 >= first { "phase_transition" } else { "no_transition" };
        assert_eq!(f[2], want, "{row}");
    }
}

#[test]
fn sweep_replays_byte_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("table1.toml");
    let o = run(&[
        "classify-sweep", "--config", cfg.to_str().unwrap(), "--m1", "6", "--m2", "4", "--trials", "300",
        "--grid-max", "1e-1", "--grid-min", "1e-3", "--per-decade", "3", "--min-errors", "3", "--max-trials", "3000",
        "--seed", "17", "--out", a.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = a.path().join("manifest.json");
    let o = bin()
        .args(["classify-sweep", "--manifest", manifest.to_str().unwrap(), "--out", b.path().to_str().unwrap()])
        .env("GMMSI_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(a.path().join("sweep.csv")).unwrap();
    let second = std::fs::read(b.path().join("sweep.csv")).unwrap();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().next(), Some("sigma2,perr_emp,perr_emp_lo,perr_emp_hi,perr_bound,mode"));
    assert_eq!(text.lines().count(), 8);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["job"]["seed"], 17);
    assert_eq!(m["command"], "classify-sweep");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn manifest_for_another_command_is_rejected() {
    let a = tempfile::tempdir().unwrap();
    let cfg = config("table1.toml");
    let o = run(&["diversity", "--config", cfg.to_str().unwrap(), "--m1", "8", "--m2", "4", "--out", a.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "d=1.5 binding=(1,1,2,1)");
    let manifest = a.path().join("manifest.json");
    let o = run(&["verdict", "--manifest", manifest.to_str().unwrap(), "--out", a.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_CONFIG:"));
}

#[test]
fn usage_errors_exit_one_with_code() {
    let o = run(&["verdict", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_USAGE:"));
    assert_eq!(stderr(&o).lines().count(), 1);

    let o = run(&["region-map", "--config", "x.toml", "--m1", "5..2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_USAGE:"));

    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn bad_inputs_write_nothing() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("out");
    let out_s = out.to_str().unwrap();

    let o = run(&["verdict", "--config", "/nonexistent/model.toml", "--m1", "1", "--m2", "1", "--out", out_s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_CONFIG:"), "{}", stderr(&o));

    let bad = root.path().join("bad.toml");
    std::fs::write(&bad, "[dims]\nn1 = 2\nn2 = 1\nk1 = 1\nk2 = 1\n[prior]\nvalues = [[0.5]]\n").unwrap();
    let o = run(&["rank-table", "--config", bad.to_str().unwrap(), "--out", out_s]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1);

    let cfg = config("table1.toml");
    let o = run(&["classify-sweep", "--config", cfg.to_str().unwrap(), "--m1", "6", "--m2", "4", "--trials", "20", "--out", out_s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_INPUT:"));

    let o = run(&["reconstruct-sweep", "--config", cfg.to_str().unwrap(), "--m1", "6", "--m2", "4", "--task", "classify_si", "--out", out_s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_TASK:"));

    let o = run(&["verdict", "--config", cfg.to_str().unwrap(), "--m1", "6", "--m2", "4", "--theorem", "gaussian", "--out", out_s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_TASK:"));

    let o = bin()
        .args(["diversity", "--config", cfg.to_str().unwrap(), "--m1", "6", "--m2", "4", "--out", out_s])
        .env("GMMSI_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));

    assert!(!out.exists(), "{:?}", files(&out));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let root = tempfile::tempdir().unwrap();
    let blocker = root.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = config("table1.toml");
    let o = run(&["rank-table", "--config", cfg.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("E_IO:"));
}

#[test]
fn reconstruct_sweep_writes_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("gauss334.toml");
    let o = run(&[
        "reconstruct-sweep", "--config", cfg.to_str().unwrap(), "--m1", "2", "--m2", "2", "--trials", "200",
        "--grid", "1e-2,1e-5", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("sigma2,mse_emp,mse_cr_emp,mmse_gauss_formula,mse_lb,m1,m2"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 7);
    assert!(!row[3].is_empty());
    // 17 significant digits.
    assert_eq!(row[0], "1.0000000000000000e-2");
}
