//! End-to-end runs of the command-line front end.

use std::fs;
use std::path::Path;

use restartq::cli::{run, EXIT_CONFIG, EXIT_ESTIMATION};
use restartq::config::{parse_config, ParsedConfig};

const STEADY: &str = r#"
seed = 9
horizon = 2000.0
policy = "ps"
replicas = 3
queue_cap = 6

[arrival]
kind = "poisson"
rate = 0.4

[job]
size = { family = "exponential", rate = 1.0 }

[failure]
law = { family = "weibull", scale = 3.0, shape = 2.0 }
"#;

const TRANSIENT: &str = r#"
mode = "transient"
seed = 4
policy = "fcfs"

[job]
size = { family = "weibull", scale = 1.0, shape = 2.0 }

[failure]
law = { family = "exponential", rate = 1.0 }

[transient]
m = 3
samples = 3000
"#;

fn cli(args: &[&str]) -> i32 {
    let mut v = vec!["restartq"];
    v.extend_from_slice(args);
    run(v)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn simulate_writes_artifacts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", STEADY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(cli(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap()]), 0);
    assert_eq!(cli(&["simulate", "--config", &cfg, "--out", b.to_str().unwrap(), "--threads", "1"]), 0);
    assert!(a.join("resolved_config.toml").exists());
    // the manifests differ only in the recorded thread count
    for f in ["trajectory.csv", "ccdf.csv", "summary.jsonl"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f} differs between runs");
    }
    let ma: serde_json::Value = serde_json::from_str(&read(a.join("manifest.json"))).unwrap();
    let mb: serde_json::Value = serde_json::from_str(&read(b.join("manifest.json"))).unwrap();
    assert_eq!(ma["replica_seeds"], mb["replica_seeds"]);
    assert_eq!(ma["replica_seeds"][0].as_array().unwrap().len(), 3);
    let summary = read(a.join("summary.jsonl"));
    assert_eq!(summary.lines().count(), 4, "three replicas and one merged record");

    // the resolved file reproduces the run bit for bit
    let c = tmp.path().join("c");
    let resolved = a.join("resolved_config.toml");
    assert_eq!(cli(&["simulate", "--config", resolved.to_str().unwrap(), "--out", c.to_str().unwrap()]), 0);
    assert_eq!(read(a.join("trajectory.csv")), read(c.join("trajectory.csv")));
    assert_eq!(read(a.join("summary.jsonl")), read(c.join("summary.jsonl")));
}

#[test]
fn seed_flag_overrides_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", STEADY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(cli(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap(), "--seed", "10"]), 0);
    assert_eq!(cli(&["simulate", "--config", &cfg, "--out", b.to_str().unwrap()]), 0);
    assert_ne!(read(a.join("trajectory.csv")), read(b.join("trajectory.csv")));
    let ParsedConfig::Steady(r) = parse_config(&a.join("resolved_config.toml")).unwrap() else { panic!() };
    assert_eq!(r.config.master_seed, 10);
    let too_big = (i64::MAX as u64 + 1).to_string();
    assert_eq!(cli(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap(), "--seed", &too_big]), EXIT_CONFIG);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    let bad = write(tmp.path(), "bad.toml", &STEADY.replace("rate = 0.4\n", ""));
    assert_eq!(cli(&["simulate", "--config", &bad, "--out", out]), EXIT_CONFIG);
    let typo = write(tmp.path(), "typo.toml", &STEADY.replace("replicas", "replica"));
    assert_eq!(cli(&["simulate", "--config", &typo, "--out", out]), EXIT_CONFIG);
    let tr = write(tmp.path(), "t.toml", TRANSIENT);
    assert_eq!(cli(&["simulate", "--config", &tr, "--out", out]), EXIT_CONFIG);
    assert_eq!(cli(&["experiment", "ex9", "--out", out]), EXIT_CONFIG);
    assert_eq!(cli(&["simulate", "--config", "/nonexistent.toml", "--out", out]), EXIT_CONFIG);
    assert_eq!(cli(&["frobnicate"]), EXIT_CONFIG);
}

#[test]
fn transient_then_tail() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "t.toml", TRANSIENT);
    let out = tmp.path().join("t");
    assert_eq!(cli(&["transient", "--config", &cfg, "--out", out.to_str().unwrap(), "--samples", "2000"]), 0);
    let samples = read(out.join("samples.csv"));
    assert_eq!(samples.lines().count(), 2001);
    assert!(samples.starts_with("sample,theta,truncated"));
    assert!(out.join("summary.jsonl").exists() && out.join("manifest.json").exists());

    let tail = tmp.path().join("tail");
    let input = out.join("samples.csv");
    assert_eq!(
        cli(&["tail", "--input", input.to_str().unwrap(), "--column", "theta", "--out", tail.to_str().unwrap()]),
        0
    );
    let est: serde_json::Value = serde_json::from_str(&read(tail.join("tail.json"))).unwrap();
    assert!(est["slope"].as_f64().unwrap() < 0.0);
    assert_eq!(est["sample_count"], 2000);
    // too deep a window for 2000 samples
    assert_eq!(
        cli(&[
            "tail",
            "--input",
            input.to_str().unwrap(),
            "--column",
            "theta",
            "--window",
            "0.999,0.9999",
            "--out",
            tail.to_str().unwrap()
        ]),
        EXIT_ESTIMATION
    );
}

#[test]
fn tail_reads_headerless_columns_by_index() {
    let tmp = tempfile::tempdir().unwrap();
    let body: String = (1..=5000).map(|i| format!("{},{}\n", i, 5000.0 / i as f64)).collect();
    let input = write(tmp.path(), "x.csv", &body);
    let out = tmp.path().join("o");
    assert_eq!(cli(&["tail", "--input", &input, "--column", "1", "--out", out.to_str().unwrap()]), 0);
    let est: serde_json::Value = serde_json::from_str(&read(out.join("tail.json"))).unwrap();
    // ccdf of 5000/i is 1/x: slope -1
    assert!((est["slope"].as_f64().unwrap() + 1.0).abs() < 0.02, "{est}");
}

#[test]
fn analytic_queries() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a");
    let o = out.to_str().unwrap();
    assert_eq!(cli(&["analytic", "stability", "--mu", "0.05", "--beta", "1", "--lambda", "0.5", "--out", o]), 0);
    let v: serde_json::Value = serde_json::from_str(&read(out.join("analytic.json"))).unwrap();
    assert!((v["lambda_star"].as_f64().unwrap() - 0.97522).abs() < 1e-4);
    assert_eq!(v["stable"], true);

    // the resolved query file reproduces the answer
    let resolved = out.join("resolved_config.toml");
    let again = tmp.path().join("b");
    assert_eq!(cli(&["analytic", "--config", resolved.to_str().unwrap(), "--out", again.to_str().unwrap()]), 0);
    assert_eq!(read(out.join("analytic.json")), read(again.join("analytic.json")));

    assert_eq!(
        cli(&["analytic", "stability", "--failure", "family = \"deterministic\", value = 1.0", "--beta", "2", "--out", o]),
        3
    );
    assert_eq!(cli(&["analytic", "throughput", "--lambda", "0.1", "--mu", "0.1", "--queue-cap", "0", "--out", o]), EXIT_CONFIG);
    assert_eq!(cli(&["analytic", "tail-index", "--alpha", "4", "--gamma", "2", "--m", "5", "--out", o]), 0);
    let v: serde_json::Value = serde_json::from_str(&read(out.join("analytic.json"))).unwrap();
    assert!((v["index"].as_f64().unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn small_experiment_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    let args = [
        "experiment",
        "ex4_ps_jobcount",
        "--samples",
        "2000",
        "--grid",
        "2",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(cli(&args), 0);
    let summary = read(out.join("summary.jsonl"));
    assert!(summary.contains("ps/m=2") && summary.contains("fcfs/m=5"));
    let ParsedConfig::Experiment(spec) = parse_config(&out.join("resolved_config.toml")).unwrap() else { panic!() };
    assert_eq!(spec.seed, 3);
    assert_eq!(spec.scale.samples, Some(2000));
}
