use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gcn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL: &str = r#"
[dataset]
manifest = "data/manifest.toml"

[meta]
meta_iterations = 2
warmup_meta_iterations = 2
learner_iterations_per_meta = 20
seeds = [0]

[generator.pretrain]
text_steps = 50
seed_steps = 20
"#;

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&gcn(
        dir.path(),
        &["fixture", "--task", "intent-detection", "--out", "data"],
    ));
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sample_is_deterministic_and_keeps_every_class() {
    let dir = workspace();
    for out in ["a", "b"] {
        ok(&gcn(
            dir.path(),
            &[
                "sample",
                "--manifest",
                "data/manifest.toml",
                "--fraction",
                "0.5",
                "--seed",
                "4",
                "--out",
                out,
            ],
        ));
    }
    for file in ["train.jsonl", "validation.jsonl", "provenance.json", "manifest.toml"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap()
        );
    }
    let provenance = read_json(&dir.path().join("a/provenance.json"));
    let classes = provenance["per_class"].as_object().unwrap();
    assert_eq!(classes.len(), 5);
    assert!(classes.values().all(|c| c["drawn"].as_u64().unwrap() >= 1));
}

#[test]
fn ten_percent_sample_is_proportional() {
    let dir = workspace();
    ok(&gcn(
        dir.path(),
        &[
            "sample",
            "--fixture",
            "intent-detection",
            "--fraction",
            "10",
            "--out",
            "s",
        ],
    ));
    let provenance = read_json(&dir.path().join("s/provenance.json"));
    for class in provenance["per_class"].as_object().unwrap().values() {
        let available = class["available"].as_u64().unwrap();
        assert_eq!(class["drawn"].as_u64().unwrap(), (available + 5) / 10);
    }
}

#[test]
fn baseline_run_writes_no_generator_checkpoint() {
    let dir = workspace();
    ok(&gcn(
        dir.path(),
        &["train", "--config", "small.toml", "--mode", "baseline", "--out", "run"],
    ));
    let run = dir.path().join("run/checkpoints/baseline-seed0");
    assert!(run.join("report.json").is_file());
    assert!(!run.join("generator").exists());
}

#[test]
fn gcn_run_has_one_record_per_meta_iteration_and_reports_render() {
    let dir = workspace();
    let stdout = ok(&gcn(
        dir.path(),
        &[
            "train",
            "--config",
            "small.toml",
            "--mode",
            "gcn-plus-rl",
            "--out",
            "run",
        ],
    ));
    assert!(stdout.contains("GCN+RL"));
    let report = read_json(&dir.path().join("run/report.json"));
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0]["history"].as_array().unwrap().len(), 2);
    assert!(runs[0]["creativity"].is_object());

    let json = ok(&gcn(dir.path(), &["report", "--run", "run", "--format", "json"]));
    assert_eq!(json, fs::read_to_string(dir.path().join("run/report.json")).unwrap());

    ok(&gcn(dir.path(), &["report", "--run", "run", "--format", "csv"]));
    let csv = fs::read_to_string(dir.path().join("run/report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("dataset,fraction,mode,metric,seeds,median,values"));
    assert!(lines.next().unwrap().starts_with("data,1,gcn_plus_rl,accuracy,1,"));

    ok(&gcn(dir.path(), &["report", "--run", "run", "--format", "plots"]));
    let mut plots: Vec<String> = fs::read_dir(dir.path().join("run/plots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    plots.sort();
    assert_eq!(plots, ["gcn_plus_rl-seed0-oov.svg", "gcn_plus_rl-seed0-reward.svg"]);

    ok(&gcn(
        dir.path(),
        &[
            "generate",
            "--checkpoint",
            "run/checkpoints/gcn_plus_rl-seed0",
            "--count",
            "12",
            "--label",
            "weather",
            "--out",
            "gen.jsonl",
        ],
    ));
    assert!(
        fs::read_to_string(dir.path().join("gen.jsonl"))
            .unwrap()
            .lines()
            .count()
            > 0
    );
    let eval = ok(&gcn(
        dir.path(),
        &[
            "evaluate",
            "--task",
            "intent-detection",
            "--train",
            "gen.jsonl",
            "--test",
            "data/test.jsonl",
        ],
    ));
    let eval: serde_json::Value = serde_json::from_str(&eval).unwrap();
    assert_eq!(eval["metric"], "accuracy");
    let creativity = ok(&gcn(
        dir.path(),
        &[
            "creativity",
            "--task",
            "intent-detection",
            "--generated",
            "gen.jsonl",
            "--seed",
            "data/train.jsonl",
            "--train",
            "data/train.jsonl",
            "--test",
            "data/test.jsonl",
        ],
    ));
    let creativity: serde_json::Value = serde_json::from_str(&creativity).unwrap();
    assert!(creativity["seed_em"].as_f64().unwrap() <= creativity["train_em"].as_f64().unwrap());
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = workspace();
    ok(&gcn(
        dir.path(),
        &[
            "train",
            "--config",
            "small.toml",
            "--mode",
            "gcn-minus-rl",
            "--out",
            "first",
        ],
    ));
    ok(&gcn(
        dir.path(),
        &["train", "--config", "first/config.toml", "--out", "second"],
    ));
    assert_eq!(
        fs::read(dir.path().join("first/events.jsonl")).unwrap(),
        fs::read(dir.path().join("second/events.jsonl")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("first/config.toml")).unwrap(),
        fs::read(dir.path().join("second/config.toml")).unwrap()
    );
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = workspace();
    fs::write(dir.path().join("bad.toml"), "bogus = 1\n").unwrap();
    assert_eq!(
        gcn(dir.path(), &["train", "--config", "bad.toml"]).status.code(),
        Some(2)
    );
    fs::write(dir.path().join("range.toml"), "[dataset]\nsample_percent = 0.0\n").unwrap();
    let out = gcn(dir.path(), &["train", "--config", "range.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset.sample_percent"));
    assert_eq!(
        gcn(dir.path(), &["train", "--config", "missing.toml"]).status.code(),
        Some(2)
    );
    assert_eq!(gcn(dir.path(), &["report", "--run", "nowhere"]).status.code(), Some(2));
}

#[test]
fn degenerate_runs_exit_with_code_four() {
    let dir = workspace();
    // A generator that never sees the end separator cannot produce parseable text.
    let config = format!("{SMALL}\n[generator.sampler]\nmax_tokens = 1\n[execution]\nmin_parse_rate = 0.5\n");
    fs::write(dir.path().join("degenerate.toml"), config).unwrap();
    let out = gcn(
        dir.path(),
        &[
            "train",
            "--config",
            "degenerate.toml",
            "--mode",
            "gcn-minus-rl",
            "--out",
            "run",
        ],
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("run/report.json"));
    assert_eq!(report["runs"][0]["degenerate"], true);
}
