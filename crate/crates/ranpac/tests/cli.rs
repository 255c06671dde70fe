use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ranpac::output::RunArtifact;

fn ranpac(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ranpac")).args(args).env("RANPAC_OUTPUT_ROOT", out_root).output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
}

fn runs(root: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn newest(root: &Path, before: &[PathBuf]) -> PathBuf {
    runs(root).into_iter().find(|p| !before.contains(p)).expect("new run directory")
}

struct Fixture {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
    out: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    let out = dir.join("runs");
    let store = dir.join("store");
    let o = ranpac(&["synth", "--out", store.to_str().unwrap(), "--classes", "6", "--dim", "16", "--per-class", "30", "--mean-scale", "0.5", "--seed", "3"], &out);
    ok(&o);
    fs::write(
        dir.join("run.json"),
        r#"{"dataset": "store", "protocol": {"kind": "cil", "tasks": 3},
            "method": {"kind": "ranpac", "projection": {"output_dim": 64}}, "seed": 5}"#,
    )
    .unwrap();
    fs::write(dir.join("ncm.json"), r#"{"dataset": "store", "protocol": {"kind": "cil", "tasks": 3}, "method": {"kind": "ncm"}, "seed": 5}"#).unwrap();
    Fixture { _tmp: tmp, dir, out }
}

fn run_config(f: &Fixture, cfg: &str, extra: &[&str]) -> PathBuf {
    let before = if f.out.exists() { runs(&f.out) } else { Vec::new() };
    let path = f.dir.join(cfg);
    let mut args = vec!["run", "--config", path.to_str().unwrap(), "-q"];
    args.extend_from_slice(extra);
    ok(&ranpac(&args, &f.out));
    newest(&f.out, &before)
}

#[test]
fn run_writes_the_expected_artifacts() {
    let f = fixture();
    let d = run_config(&f, "run.json", &["--set", "outputs.export_head=true"]);
    for name in ["config.json", "result.json", "r_matrix.csv", "metrics.csv", "summary.txt", "head.bin", "head.json"] {
        assert!(d.join(name).exists(), "missing {name}");
    }
    let art: RunArtifact = serde_json::from_slice(&fs::read(d.join("result.json")).unwrap()).unwrap();
    assert_eq!(art.result.r.len(), 3);
    assert_eq!(art.tool, "ranpac");
    // 3 tasks give 1 + 2 + 3 lower-triangle entries plus a header.
    assert_eq!(fs::read_to_string(d.join("r_matrix.csv")).unwrap().lines().count(), 7);
    let head = fs::read(d.join("head.bin")).unwrap();
    assert_eq!(&head[..8], b"PFHEAD01");
    assert_eq!(head.len(), 8 + 64 * 6 * 8);
    assert!(!runs(&f.out).iter().any(|p| p.file_name().unwrap().to_string_lossy().ends_with(".partial")));
}

#[test]
fn reruns_produce_identical_csv() {
    let f = fixture();
    let a = run_config(&f, "run.json", &["--name", "a"]);
    let b = run_config(&f, "run.json", &["--name", "b"]);
    for name in ["r_matrix.csv", "metrics.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn single_size_sweep_matches_run() {
    let f = fixture();
    let run_dir = run_config(&f, "run.json", &[]);
    let before = runs(&f.out);
    let cfg = f.dir.join("run.json");
    ok(&ranpac(&["sweep-m", "--config", cfg.to_str().unwrap(), "--m", "64", "-q"], &f.out));
    let sweep_dir = newest(&f.out, &before);
    let art: RunArtifact = serde_json::from_slice(&fs::read(run_dir.join("result.json")).unwrap()).unwrap();
    let csv = fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "64");
    assert_eq!(row[1], art.result.final_accuracy().unwrap().to_string());
}

#[test]
fn report_compares_against_the_baseline() {
    let f = fixture();
    let a = run_config(&f, "run.json", &[]);
    let b = run_config(&f, "ncm.json", &[]);
    let table = f.dir.join("table.csv");
    let o = ranpac(&["report", a.to_str().unwrap(), b.to_str().unwrap(), "--out", table.to_str().unwrap()], &f.out);
    ok(&o);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(&table).unwrap().records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let ranpac_row = rows.iter().find(|r| &r[2] == "ranpac").unwrap();
    let ncm_row = rows.iter().find(|r| &r[2] == "ncm").unwrap();
    assert_eq!(&ncm_row[7], "");
    let (acc, base): (f64, f64) = (ranpac_row[4].parse().unwrap(), ncm_row[4].parse().unwrap());
    assert!(base < 1.0, "{rows:?}");
    let rel: f64 = ranpac_row[7].parse().unwrap();
    assert!((rel - ((1.0 - base) - (1.0 - acc)) / (1.0 - base)).abs() < 1e-12, "{rows:?}");
}

#[test]
fn report_warns_on_mixed_datasets() {
    let f = fixture();
    let a = run_config(&f, "run.json", &[]);
    let xor = f.dir.join("xor");
    ok(&ranpac(&["synth", "--kind", "xor", "--out", xor.to_str().unwrap(), "--train", "200", "--val", "100"], &f.out));
    fs::write(f.dir.join("xor.json"), r#"{"dataset": "xor", "protocol": {"kind": "cil", "tasks": 1}, "method": {"kind": "ncm"}}"#).unwrap();
    let b = run_config(&f, "xor.json", &[]);
    let o = ranpac(&["report", a.to_str().unwrap(), b.to_str().unwrap()], &f.out);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("datasets"));
}

#[test]
fn exit_codes_follow_the_error_class() {
    let f = fixture();
    let out = &f.out;
    assert_eq!(ranpac(&["run", "--config", f.dir.join("absent.json").to_str().unwrap()], out).status.code(), Some(1));
    assert_eq!(ranpac(&["bogus"], out).status.code(), Some(1));
    let cfg = f.dir.join("run.json");
    assert_eq!(ranpac(&["run", "--config", cfg.to_str().unwrap(), "--set", "protocol.tasks=0"], out).status.code(), Some(1));
    fs::write(f.dir.join("missing.json"), r#"{"dataset": "nowhere", "protocol": {"kind": "dil"}, "method": {"kind": "ncm"}}"#).unwrap();
    assert_eq!(ranpac(&["run", "--config", f.dir.join("missing.json").to_str().unwrap()], out).status.code(), Some(2));
    // Six classes cannot be split into ten tasks.
    assert_eq!(ranpac(&["run", "--config", cfg.to_str().unwrap(), "--set", "protocol.tasks=10"], out).status.code(), Some(1));
    assert_eq!(ranpac(&["inspect", f.dir.join("store").to_str().unwrap()], out).status.code(), Some(0));
}

#[test]
fn failed_runs_leave_no_directory() {
    let f = fixture();
    let cfg = f.dir.join("ncm.json");
    let o = ranpac(&["run", "--config", cfg.to_str().unwrap(), "--set", "outputs.export_head=true"], &f.out);
    assert_eq!(o.status.code(), Some(1));
    assert!(!f.out.exists() || runs(&f.out).is_empty(), "{:?}", runs(&f.out));
}

#[test]
fn theory_reports_write_tables() {
    let f = fixture();
    fs::write(
        f.dir.join("ip.json"),
        r#"{"kind": "inner_product", "l": 8, "pairs": 2, "m_values": [16, 64], "trials": 100, "epsilon": 0.3, "seed": 1}"#,
    )
    .unwrap();
    fs::write(f.dir.join("hist.json"), r#"{"kind": "histogram", "dataset": "store", "lambda": 1.0}"#).unwrap();
    for (cfg, file) in [("ip.json", "concentration.csv"), ("hist.json", "histogram_ncm.dat")] {
        let before = if f.out.exists() { runs(&f.out) } else { Vec::new() };
        ok(&ranpac(&["theory", "--config", f.dir.join(cfg).to_str().unwrap(), "-q"], &f.out));
        let d = newest(&f.out, &before);
        assert!(d.join(file).exists(), "{cfg}: missing {file}");
        assert!(d.join("result.json").exists());
    }
}
