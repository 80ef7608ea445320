//! End-to-end checks of the `gnesim` binary: subcommand behavior, the JSON
//! and CSV it emits, and the exit-code contract (0 ok, 2 config error,
//! 3 schedule violation, 4 rejected certificate, 1 anything else).

use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn gnesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnesim"))
        .args(args)
        .output()
        .expect("spawn gnesim")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

/// Run summary with the wall-clock field dropped; everything else must
/// replay exactly.
fn replayable(out: &Output) -> Value {
    let mut v = stdout_json(out);
    v.as_object_mut().unwrap().remove("wall_secs");
    v
}

const MICRO: &str = r#"{
  "game": { "type": "builtin-micro", "params": {} },
  "learner": { "iters": 2000, "seed": 9 }
}"#;

#[test]
fn run_prints_summary_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "micro.json", MICRO);
    let out_dir = dir.path().join("out");
    let out = gnesim(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let summary = stdout_json(&out);
    assert_eq!(summary["iterations"], 2000);
    assert_eq!(summary["final_mu"].as_array().unwrap().len(), 2);
    assert!(summary["final_rel_err"].as_f64().unwrap() < 1.0);

    let entries: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let csv_name = entries
        .iter()
        .find(|n| n.ends_with(".csv"))
        .unwrap_or_else(|| panic!("no csv in {entries:?}"));
    assert!(entries.iter().any(|n| n.ends_with(".json")));
    assert!(csv_name.starts_with("run-") && csv_name.contains("-seed9"));

    let csv = std::fs::read_to_string(out_dir.join(csv_name)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,mu_1,mu_2,lambda_1,g_1,rel_err,payoff_1,payoff_2"
    );
    assert_eq!(lines.count(), 2000);
}

#[test]
fn run_is_deterministic_and_seed_override_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "micro.json", MICRO);
    let a = gnesim(&["run", "--config", &cfg, "--seed", "1"]);
    let b = gnesim(&["run", "--config", &cfg, "--seed", "1"]);
    let c = gnesim(&["run", "--config", &cfg, "--seed", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(
        replayable(&a),
        replayable(&b),
        "same seed must replay identically"
    );
    assert_ne!(
        replayable(&a),
        replayable(&c),
        "different seed must move the iterates"
    );
}

#[test]
fn run_iters_override_shortens_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "micro.json", MICRO);
    let out = gnesim(&["run", "--config", &cfg, "--iters", "50"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["iterations"], 50);
}

#[test]
fn oracle_certifies_the_micro_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "micro.json", MICRO);
    let out = gnesim(&["oracle", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let cert = stdout_json(&out);
    assert_eq!(cert["accepted"], true);
    let action = cert["action"].as_array().unwrap();
    assert!((action[0].as_f64().unwrap() - 1.5).abs() < 1e-8);
    assert!((cert["multiplier"][0].as_f64().unwrap() - 2.0).abs() < 1e-8);
}

#[test]
fn starved_oracle_exits_4_with_rejected_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "starved.json",
        r#"{
  "game": { "type": "builtin-micro", "params": {} },
  "learner": { "iters": 10, "seed": 1 },
  "oracle": { "tol": 1e-10, "max_iters": 3 }
}"#,
    );
    let out = gnesim(&["oracle", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(4), "{out:?}");
    assert_eq!(stdout_json(&out)["accepted"], false);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("certificate rejected"), "{err}");
}

#[test]
fn validate_reports_game_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "micro.json", MICRO);
    let out = gnesim(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("2 players") && text.contains("schedule admissible"),
        "{text}"
    );
}

#[test]
fn inadmissible_schedule_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "slow.json",
        r#"{
  "game": { "type": "builtin-micro", "params": {} },
  "schedule": { "a": 0.45, "b": 0.2 },
  "learner": { "iters": 100, "seed": 1 }
}"#,
    );
    let out = gnesim(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("2a>1"), "{err}");

    // a non-strict run only warns; --strict refuses with the same code
    let soft = gnesim(&["run", "--config", &cfg]);
    assert_eq!(soft.status.code(), Some(0), "{soft:?}");
    let strict = gnesim(&["run", "--config", &cfg, "--strict"]);
    assert_eq!(strict.status.code(), Some(3), "{strict:?}");
}

#[test]
fn config_mistakes_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = gnesim(&["run", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(missing.status.code(), Some(2), "{missing:?}");

    let typo = write_config(
        dir.path(),
        "typo.json",
        r#"{
  "game": { "type": "builtin-micro", "params": {} },
  "learner": { "iters": 100, "seed": 1, "sede": 2 }
}"#,
    );
    let out = gnesim(&["validate", "--config", &typo]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error"), "{err}");

    let bad_game = write_config(
        dir.path(),
        "bad_game.json",
        r#"{
  "game": { "type": "cournot", "params": { "players": 3 } },
  "learner": { "iters": 100, "seed": 1 }
}"#,
    );
    let out = gnesim(&["run", "--config", &bad_game]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn sweep_aggregates_quantiles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "micro.json", MICRO);
    let out = gnesim(&["sweep", "--config", &cfg, "--seeds", "5"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let summary = stdout_json(&out);
    assert_eq!(summary["runs"], 5);
    assert_eq!(summary["master_seed"], 9);
    assert!(summary["final_rel_err"]["median"].as_f64().is_some());
    assert!(summary["max_constraint_violation"]["max"].as_f64().is_some());
}

#[test]
fn drawn_market_config_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("market.json");
    let out = gnesim(&[
        "cournot",
        "--players",
        "3",
        "--horizon",
        "2",
        "--seed",
        "5",
        "--emit-config",
        recipe.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(&recipe).unwrap()).unwrap();
    assert_eq!(cfg["game"]["type"], "cournot");
    assert_eq!(cfg["game"]["params"]["players"], 3);
    assert_eq!(cfg["game"]["params"]["c"].as_array().unwrap().len(), 2);

    let run = gnesim(&["run", "--config", recipe.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{run:?}");
    let summary = stdout_json(&run);
    assert_eq!(summary["final_mu"].as_array().unwrap().len(), 6);
    // the emitted recipe pins every drawn value, so a re-run is a replay
    let again = gnesim(&["run", "--config", recipe.to_str().unwrap()]);
    assert_eq!(replayable(&run), replayable(&again));
}

#[test]
fn diagnose_score_and_mono_pass_on_micro() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "micro.json", MICRO);

    let score = gnesim(&["diagnose", "--config", &cfg, "--check", "score"]);
    assert_eq!(score.status.code(), Some(0), "{score:?}");
    let reports = stdout_json(&score);
    assert!(reports.as_array().unwrap().iter().all(|r| r["pass"] == true));

    let mono = gnesim(&["diagnose", "--config", &cfg, "--check", "mono"]);
    assert_eq!(mono.status.code(), Some(0), "{mono:?}");
    let report = stdout_json(&mono);
    assert_eq!(report["class"], "strong");
    assert!((report["kappa"].as_f64().unwrap() - 2.0).abs() < 1e-9);

    let recursion = gnesim(&["diagnose", "--config", &cfg, "--check", "recursion"]);
    assert_eq!(recursion.status.code(), Some(0), "{recursion:?}");
    assert_eq!(stdout_json(&recursion)["holds"], true);
}

#[test]
fn diagnose_rate_passes_on_a_decoupled_quadratic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "quad.json",
        r#"{
  "game": { "type": "quadratic",
            "params": { "targets": [1.0, -0.5], "block_dim": 1,
                        "lower": [-10.0, -10.0], "upper": [10.0, 10.0] } },
  "learner": { "iters": 20000, "seed": 3, "log_every": 0 }
}"#,
    );
    let out = gnesim(&["diagnose", "--config", &cfg, "--check", "rate"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let fit = stdout_json(&out);
    assert_eq!(fit["pass"], true);
    assert!(fit["slope"].as_f64().unwrap() <= -0.45);
}
