//! Command-line contract tests: exit codes, usage errors, and a miniature
//! end-to-end search -> checkpoint -> evaluation round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn seforge(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seforge"))
        .args(args)
        .current_dir(dir)
        .env_remove("SEFORGE_THREADS")
        .output()
        .expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("seforge-cli-{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_2() {
    let dir = temp_dir("unknown-cmd");
    let out = seforge(&["frobnicate"], &dir);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("USAGE"));
}

#[test]
fn unknown_flag_exits_2() {
    let dir = temp_dir("unknown-flag");
    let out = seforge(&["train-se", "--frob", "3"], &dir);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown flag"));
}

#[test]
fn missing_config_file_exits_2() {
    let dir = temp_dir("missing-config");
    let out = seforge(&["train-se", "--config", "nope.cfg"], &dir);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn malformed_config_exits_2() {
    let dir = temp_dir("malformed-config");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "task = cartpole\nnes.step_size\n").unwrap();
    let out = seforge(&["train-se", "--config", cfg.to_str().unwrap()], &dir);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("key = value"));
}

#[test]
fn bad_threads_env_exits_2() {
    let dir = temp_dir("bad-threads");
    let out = Command::new(env!("CARGO_BIN_EXE_seforge"))
        .args(["eval-se", "--config", repo_config("cartpole.cfg").to_str().unwrap()])
        .current_dir(&dir)
        .env("SEFORGE_THREADS", "many")
        .output()
        .expect("binary runs");
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn help_exits_0() {
    let dir = temp_dir("help");
    let out = seforge(&["--help"], &dir);
    assert_eq!(exit_code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("train-se"));
}

/// Micro search with a reduced config: writes the run log and a loadable
/// checkpoint, which eval-se and histograms then consume.
#[test]
fn train_eval_histogram_round_trip() {
    let dir = temp_dir("round-trip");
    // tiny search so the whole trip stays in seconds
    let base = std::fs::read_to_string(repo_config("cartpole.cfg")).unwrap();
    let tiny = base
        .replace("nes.outer_loops = 200", "nes.outer_loops = 2")
        .replace("nes.population_size = 16", "nes.population_size = 4")
        .replace("nes.max_train_episodes = 1000", "nes.max_train_episodes = 3")
        .replace("ddqn.batch_size = 199", "ddqn.batch_size = 16")
        .replace("ddqn.hidden_size = 57", "ddqn.hidden_size = 8");
    let cfg = dir.join("tiny.cfg");
    std::fs::write(&cfg, tiny).unwrap();

    let out = seforge(
        &["train-se", "--config", cfg.to_str().unwrap(), "--seed", "1", "--workers", "2", "--out", "run"],
        &dir,
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let ckpt = dir.join("run/se_cartpole_seed1.json");
    assert!(ckpt.exists());
    let log = std::fs::read_to_string(dir.join("run/train_se_cartpole_seed1.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let parsed: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["generation", "scores", "transformed", "update_norm", "mean_eval", "wall_ms"] {
            assert!(parsed.get(key).is_some(), "run log line missing {key}");
        }
        assert_eq!(parsed["scores"].as_array().unwrap().len(), 4);
    }

    let out = seforge(
        &[
            "eval-se",
            "--config",
            cfg.to_str().unwrap(),
            "--se",
            ckpt.to_str().unwrap(),
            "--n-agents",
            "2",
            "--max-episodes",
            "25",
            "--out",
            "eval",
        ],
        &dir,
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let evals = std::fs::read_to_string(dir.join("eval/eval_se_cartpole_seed1_evals.csv")).unwrap();
    assert!(evals.starts_with("se_id,agent_kind,lr,"));
    assert_eq!(evals.lines().count(), 1 + 2);

    let out = seforge(
        &[
            "histograms",
            "--config",
            cfg.to_str().unwrap(),
            "--se",
            ckpt.to_str().unwrap(),
            "--n-agents",
            "1",
            "--max-episodes",
            "25",
            "--out",
            "hist",
        ],
        &dir,
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for dim in ["s0", "s1", "s2", "s3", "reward"] {
        assert!(dir.join(format!("hist/hist_cartpole_{dim}.csv")).exists());
        assert!(dir.join(format!("hist/hist_cartpole_{dim}.svg")).exists());
    }

    // wrong-task checkpoint is a config error
    let out = seforge(
        &[
            "eval-se",
            "--config",
            repo_config("acrobot.cfg").to_str().unwrap(),
            "--se",
            ckpt.to_str().unwrap(),
        ],
        &dir,
    );
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("task"));
}
