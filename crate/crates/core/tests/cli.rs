use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sample_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample.csv")
}

fn sentidist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sentidist")).args(args).env_remove("SENTIDIST_CONFIG").output().unwrap()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bad_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.ini");
    fs::write(&cfg, "[training]\nlearning_rat = 0.1\n").unwrap();
    let out = sentidist(&["--config", path_arg(&cfg), "--dry-run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
}

#[test]
fn zero_workers_exits_2() {
    let out = sentidist(&["--workers", "0", "--dry-run"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_3_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let missing = dir.path().join("absent.csv");
    let out = sentidist(&["--input", path_arg(&missing), "--out", path_arg(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_dir.exists());
}

#[test]
fn oversized_subsample_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = sentidist(&[
        "--input",
        path_arg(&sample_path()),
        "--subsample",
        "20001",
        "--out",
        path_arg(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn more_workers_than_examples_exits_4_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = sentidist(&[
        "--input",
        path_arg(&sample_path()),
        "--subsample",
        "10",
        "--workers",
        "8",
        "--mode",
        "both",
        "--out",
        path_arg(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.exists());
}

#[test]
fn dry_run_reads_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = sentidist(&["--input", "/nonexistent.csv", "--out", path_arg(&out_dir), "--dry-run", "--sweep", "1,2"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("workers: 4"));
    assert!(stdout.contains("sweep: [1, 2]"));
    assert!(!out_dir.exists());
}

#[test]
fn cost_only_writes_cost_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.ini");
    fs::write(&cfg, "[cost]\nexamples = 100000\n[output]\ndir = out\n").unwrap();
    let out = sentidist(&["--config", path_arg(&cfg), "--mode", "cost-only"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<_> = fs::read_dir(dir.path().join("out")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, ["cost.json"]);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/cost.json")).unwrap()).unwrap();
    assert_eq!(report["calibration_source"], "nominal");
    assert!(report["train_distributed"]["predicted_speedup"].as_f64().unwrap() <= 4.0);
}

#[test]
fn cost_only_without_examples_exits_2() {
    let out = sentidist(&["--mode", "cost-only", "--out", "/nonexistent/out"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = sentidist(&[
        "--input",
        path_arg(&sample_path()),
        "--subsample",
        "2000",
        "--sweep",
        "1,2,4",
        "--out",
        path_arg(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,wall_seconds,sim_seconds,predicted_seconds,accuracy");
    let ks: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ks, ["1", "2", "4"]);
}

#[test]
fn generate_sample_matches_bundled_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sample.csv");
    let out = sentidist(&["--generate-sample", path_arg(&path)]);
    assert!(out.status.success());
    assert!(fs::read(&path).unwrap() == fs::read(sample_path()).unwrap(), "bundled sample is stale");
}

#[test]
fn both_mode_reports_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = sentidist(&["--input", path_arg(&sample_path()), "--subsample", "3000", "--out", path_arg(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let read = |name: &str| -> serde_json::Value {
        serde_json::from_slice(&fs::read(out_dir.join(name)).unwrap()).unwrap()
    };
    let single = read("single.json");
    let dist = read("distributed.json");
    assert_eq!(single["mode"]["kind"], "single_node");
    assert_eq!(dist["mode"]["workers"], 4);
    let model = |name: &str| {
        sentidist::model::read_checkpoint(std::io::BufReader::new(fs::File::open(out_dir.join(name)).unwrap())).unwrap()
    };
    assert!(model("single.model").max_relative_diff(&model("distributed.model")) <= 1e-9);
    assert_eq!(dist["result_messages"], 4);
    let comparison = read("comparison.json");
    let names: Vec<&str> = comparison["rows"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["processing_time_s", "accuracy"]);
    let transfers = fs::read_to_string(out_dir.join("transfers.csv")).unwrap();
    assert!(transfers.lines().count() > 1);
}

#[test]
fn bundled_config_loads() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/experiment.ini");
    let out = sentidist(&["--config", path_arg(&cfg), "--dry-run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("sample.csv"), "{stdout}");
}
