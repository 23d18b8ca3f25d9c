use std::path::Path;
use std::process::{Command, Output};

fn streampop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streampop"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = streampop(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> String {
    let data = dir.join("data");
    let mut args = vec![
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--n-streamers",
        "120",
        "--seed",
        "5",
    ];
    args.extend(extra);
    ok(&args);
    data.to_str().unwrap().to_string()
}

#[test]
fn validate_names_the_broken_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    assert!(ok(&["validate", "--dataset", &data]).starts_with("ok: 120 streamers"));
    let path = Path::new(&data).join("posts.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "{\"broken\": ";
    std::fs::write(&path, lines.join("\n")).unwrap();
    let out = streampop(&["validate", "--dataset", &data]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.starts_with("error: ") && err.contains("posts.jsonl") && err.contains('5'),
        "{err}"
    );
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gen.toml");
    std::fs::write(&config, "n_streamers = 40\nbeta = 0.25\n").unwrap();
    let out = synth(dir.path(), &["--config", config.to_str().unwrap(), "--beta", "0.9"]);
    assert!(ok(&["validate", "--dataset", &out]).starts_with("ok: 40 streamers"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "taks = [\"absolute\"]\n").unwrap();
    let out = streampop(&[
        "analyze",
        "--dataset",
        "x",
        "--out",
        "y",
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("taks"));
}

#[test]
fn features_command_writes_one_row_per_streamer() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let csv = dir.path().join("f.csv");
    ok(&[
        "features",
        "--dataset",
        &data,
        "--t",
        "2",
        "--delta",
        "3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 25);
    assert_eq!(lines.count(), 120);
}

#[test]
fn rerunning_analyze_reproduces_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--beta", "0.8"]);
    let out = dir.path().join("report");
    let out = out.to_str().unwrap();
    let args = [
        "analyze",
        "--dataset",
        &data,
        "--out",
        out,
        "--task",
        "relative_growth",
        "--measure",
        "followers",
        "--delta",
        "2",
        "--ages",
        "1,2",
        "--bootstrap",
        "10",
        "--split-seed",
        "3",
    ];
    ok(&args);
    let first = std::fs::read_to_string(Path::new(out).join("manifest.txt")).unwrap();
    ok(&args);
    let second = std::fs::read_to_string(Path::new(out).join("manifest.txt")).unwrap();
    assert_eq!(first, second);
    for rel in [
        "auc_curves.csv",
        "runconfig.txt",
        "leakage_audit.txt",
        "charts/auc_interval_relative_growth_followers.svg",
    ] {
        assert!(first.contains(&format!("  {rel}\n")), "{rel}");
    }
    let runconfig = std::fs::read_to_string(Path::new(out).join("runconfig.txt")).unwrap();
    assert!(runconfig.contains("split_seed = 3"));
    assert!(!runconfig.contains(&data));
}

#[test]
fn oracle_suite_passes() {
    let text = ok(&["oracle", "--seed", "7"]);
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}
