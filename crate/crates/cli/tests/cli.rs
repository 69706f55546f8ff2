use std::path::Path;
use std::process::{Command, Output};

fn hybridrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybridrank"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Small two-taste dataset: users prefer odd or even items.
fn write_dataset(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let mut data = String::new();
    for u in 1..=40u32 {
        let count = 20 + (u * 7) % 25;
        for k in 0..count {
            let item = (u * 13 + k * 3) % 70 + 1;
            let liked = item % 2 == u % 2;
            let rating = if liked { 4 + (u + k) % 2 } else { 1 + (u + k) % 3 };
            data.push_str(&format!("{u}\t{item}\t{rating}\t{}\n", 880000000 + k));
        }
    }
    std::fs::write(dir.join("u.data"), data).unwrap();
    let items: String = (1..=70).map(|i| format!("{i}|Film {i} (1990)|01-Jan-1990||http://x|0\n")).collect();
    std::fs::write(dir.join("u.item"), items).unwrap();
}

fn write_config(dir: &Path, thresholds: &str) -> String {
    write_dataset(&dir.join("data"));
    let path = dir.join("run.json");
    std::fs::write(
        &path,
        format!(
            r#"{{
  "dataset": {{"path": "data", "format": "ml100k"}},
  "model": {{"kind": "itemknn", "hyperparameters": {{"k_neighbors": 10}}}},
  "thresholds": {thresholds},
  "llm": {{"mode": "mock", "mock": {{"kind": "oracle"}}}},
  "output_dir": "out"
}}"#
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_artifacts_and_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{}");
    let o = hybridrank(&["run", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.json", "assessment.csv", "weak_counts.csv", "users.csv"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
    assert!(dir.path().join("out/prompts").is_dir());
    assert!(dir.path().join("out/responses").is_dir());

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    let out = stdout(&o);
    let base_auc = report["base"]["overall_auc"].as_f64().unwrap().to_string();
    let hybrid_auc = report["hybrid"]["overall_auc"].as_f64().unwrap().to_string();
    let line = |name: &str| out.lines().find(|l| l.starts_with(name)).unwrap().to_string();
    assert_eq!(line("base").split_whitespace().nth(1).unwrap(), base_auc);
    assert_eq!(line("hybrid").split_whitespace().nth(1).unwrap(), hybrid_auc);
}

#[test]
fn invalid_threshold_exits_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"t_p": 1.5}"#);
    let o = hybridrank(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("thresholds.t_p"), "{}", stderr(&o));
}

#[test]
fn unreadable_config_exits_2() {
    let o = hybridrank(&["assess", "--config", "/nonexistent/run.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_dataset_exits_1_naming_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{}");
    std::fs::remove_file(dir.path().join("data/u.data")).unwrap();
    let o = hybridrank(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ingest stage failed"), "{}", stderr(&o));
}

#[test]
fn assess_then_prompts_with_cache_hit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{}");

    let o = hybridrank(&["prompts", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run assess first"));

    let o = hybridrank(&["assess", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("cache miss"));
    let csv = std::fs::read_to_string(dir.path().join("out/assessment.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    assert!(!dir.path().join("out/prompts").exists());

    let o = hybridrank(&["assess", "--config", &cfg]);
    assert!(stderr(&o).contains("cache hit"), "{}", stderr(&o));

    let weak = std::fs::read_to_string(dir.path().join("out/weak_users.txt")).unwrap();
    let o = hybridrank(&["prompts", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), weak.lines().count().to_string());
    let n_files = std::fs::read_dir(dir.path().join("out/prompts")).unwrap().count();
    assert_eq!(n_files, weak.lines().count());
}

#[test]
fn zero_t_p_prompts_match_weak_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"t_p": 0.0}"#);
    assert!(hybridrank(&["assess", "--config", &cfg]).status.success());
    let o = hybridrank(&["prompts", "--config", &cfg]);
    assert!(o.status.success());
    let weak = std::fs::read_to_string(dir.path().join("out/weak_users.txt")).unwrap();
    assert_eq!(stdout(&o).trim(), weak.lines().count().to_string());
}

#[test]
fn output_dir_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{}");
    let alt = dir.path().join("alt");
    let o = hybridrank(&["assess", "--config", &cfg, "--output-dir", alt.to_str().unwrap(), "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(alt.join("assessment.csv").is_file());
    assert!(!dir.path().join("out").exists());
}
