use elicit::channel::symmetric_capacity;
use std::path::Path;
use std::process::{Command, Output};

fn elicit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elicit"))
        .args(args)
        .env_remove("ELICIT_DATA_DIR")
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(
        &path,
        r#"
d = 3
K = 3
paths = 3
seed = 4
compare = ["entropy_pursuit", "knowledge_gradient"]
metric_samples = 600
misclass_questions = 20
answer_entropy_draws = 1000
answer_entropy_questions = 50
[catalog]
kind = "synthetic"
size = 40
[policy]
N = 6
[policy.samples]
count = 300
burn_in = 100
thinning = 2
"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn help_documents_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("analyze-channel", &["--channel", "--symmetric", "--tol"]),
        ("simulate", &["--config", "--paths", "--questions", "--compare", "--timing"]),
        ("ingest", &["--data"]),
        ("serve", &["--addr", "--data"]),
    ];
    for (sub, flags) in expected {
        let out = elicit(&[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        let text = String::from_utf8_lossy(&out.stdout);
        for flag in flags.iter().chain(&["--seed", "--threads", "--out"]) {
            assert!(text.contains(flag), "{sub} help lacks {flag}");
        }
    }
    assert!(elicit(&["--help"]).status.success());
}

#[test]
fn analyze_symmetric_channel() {
    let out = elicit(&["analyze-channel", "--symmetric", "2,0.7"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = v["capacity_bits"].as_f64().unwrap();
    assert!((c - symmetric_capacity(2, 0.7).unwrap()).abs() < 1e-8);
    assert_eq!(v["admissible"], true);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("\"seed\""), "resolved config line missing: {stderr}");
}

#[test]
fn analyze_channel_file_writes_output() {
    let dir = tempfile::tempdir().unwrap();
    let ch = dir.path().join("ch.json");
    std::fs::write(&ch, r#"{"m": 3, "matrix": [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.45, 0.45, 0.1]]}"#).unwrap();
    let out_dir = dir.path().join("res");
    let out = elicit(&[
        "analyze-channel",
        "--channel",
        ch.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("channel.json")).unwrap()).unwrap();
    assert_eq!(v["dominated_rows"], serde_json::json!([2]));
}

#[test]
fn missing_config_names_the_path() {
    let out = elicit(&["simulate", "--config", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    let line = String::from_utf8_lossy(&out.stderr);
    let last = line.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(v["code"], "io");
    assert!(v["message"].as_str().unwrap().contains("missing.json"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(elicit(&["simulate", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(elicit(&["analyze-channel", "--symmetric", "2,0.7", "--seed", "x"]).status.code(), Some(2));
    assert_eq!(elicit(&[]).status.code(), Some(2));
}

#[test]
fn seeded_simulations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let runs: Vec<_> = [("a", "1"), ("b", "1"), ("c", "3")]
        .iter()
        .map(|(name, threads)| {
            let out = dir.path().join(name);
            let res = elicit(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
            assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
            out
        })
        .collect();
    for f in ["metrics.csv", "summary.json"] {
        let a = std::fs::read(runs[0].join(f)).unwrap();
        assert_eq!(a, std::fs::read(runs[1].join(f)).unwrap(), "{f}");
        assert_eq!(a, std::fs::read(runs[2].join(f)).unwrap(), "{f}");
    }
    let other = dir.path().join("d");
    elicit(&["simulate", "--config", &cfg, "--out", other.to_str().unwrap(), "--seed", "99"]);
    assert_ne!(
        std::fs::read(runs[0].join("metrics.csv")).unwrap(),
        std::fs::read(other.join("metrics.csv")).unwrap()
    );
}

#[test]
fn ingest_reports_counts_and_line_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.jsonl");
    std::fs::write(
        &good,
        "{\"id\":\"a\",\"features\":[1,2,3,4]}\n{\"id\":\"b\",\"features\":[0,1,0,1]}\n{\"id\":\"c\",\"features\":[2,2,2,2]}\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    let out = elicit(&["ingest", good.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((v["count"].as_u64(), v["d"].as_u64()), (Some(3), Some(4)));
    let again: serde_json::Value =
        serde_json::from_slice(&elicit(&["ingest", good.to_str().unwrap(), "--data", data.to_str().unwrap()]).stdout)
            .unwrap();
    assert_eq!(v["catalog_id"], again["catalog_id"]);

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\":\"a\",\"features\":[1,2]}\n{\"id\":\"b\",\"features\":[1]}\n").unwrap();
    let out = elicit(&["ingest", bad.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap()).unwrap();
    assert_eq!(err["code"], "ingestion");
    assert_eq!(err["lines"][0]["line"], 2);
}
