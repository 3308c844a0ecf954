//! Black-box checks of the command-line interface: stage wiring, config
//! digest verification, and the documented exit codes (2 config, 3 data,
//! 4 budget).

use std::path::Path;
use std::process::Output;

fn engage(args: &[&str], dir: &Path) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_engage"))
        .args(args)
        .arg("--dir")
        .arg(dir)
        .output()
        .expect("spawn engage")
}

const SMALL_CONFIG: &str = r#"
[generator]
users = 30
tweets = 50
vocab = 96
impressions = 500
days = 3

[sketch]
depth = 4
width = 8

[model]
hidden_width = 16
hidden_layers = 2
max_embed_dim = 3
languages = 4
epochs_stage1 = 1
epochs_stage2 = 1

[bench]
warmup = 10
predictions = 100
"#;

#[test]
fn run_subcommand_produces_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, SMALL_CONFIG).unwrap();
    let dir = tmp.path().join("work");
    let out = engage(
        &["--config", cfg.to_str().unwrap(), "run", "--seed", "1"],
        &dir,
    );
    assert!(
        out.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "log.tsv",
        "followers.tsv",
        "embeddings.tsv",
        "codec.txt",
        "plan.txt",
        "model.bin",
        "holdout.txt",
        "preds.tsv",
    ] {
        assert!(dir.join(f).exists(), "missing artifact {f}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("bench:"), "bench line missing:\n{stdout}");
    assert!(
        stdout.contains("reaction") && stdout.contains("retweet"),
        "eval table missing:\n{stdout}"
    );
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[sketch]\nnot_a_key = 1\n").unwrap();
    let out = engage(
        &["--config", cfg.to_str().unwrap(), "gen", "--seed", "1"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = engage(&["partition"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn stale_config_digest_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, SMALL_CONFIG).unwrap();
    let dir = tmp.path().join("work");
    let ok = engage(
        &["--config", cfg.to_str().unwrap(), "gen", "--seed", "1"],
        &dir,
    );
    assert!(ok.status.success());
    // change the config after gen; partition must refuse the stale log
    std::fs::write(&cfg, SMALL_CONFIG.replace("days = 3", "days = 4")).unwrap();
    let out = engage(&["--config", cfg.to_str().unwrap(), "partition"], &dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest"));
}

#[test]
fn bench_enforce_exits_4_when_over_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!("{SMALL_CONFIG}p95_budget_ms = 0.0000001\n"),
    )
    .unwrap();
    let dir = tmp.path().join("work");
    let c = cfg.to_str().unwrap();
    for step in ["gen", "fit-sketch", "partition", "train"] {
        let out = if step == "gen" {
            engage(&["--config", c, "gen", "--seed", "1"], &dir)
        } else {
            engage(&["--config", c, step], &dir)
        };
        assert!(
            out.status.success(),
            "{step} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = engage(&["--config", c, "bench", "--enforce"], &dir);
    assert_eq!(out.status.code(), Some(4));
    // without --enforce the same budget miss is only a warning
    let out = engage(&["--config", c, "bench"], &dir);
    assert!(out.status.success());
}
