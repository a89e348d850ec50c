use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rail_core::io::{read_checkpoint, sha256_hex, write_checkpoint, Checkpoint};
use rail_core::learners::IterationReport;
use rail_core::policy::{NormalizerState, PolicyParams, PolicyShape};
use rail_core::sim::{evaluate_policy, ConstantPolicy, DrivingAction, DrivingStats, HighwayConfig};

fn rail(args: &[&str]) -> Output {
    rail_env(args, &[])
}

fn rail_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rail"));
    cmd.args(args).env_remove("RAIL_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("failed to run the rail binary")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by a signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A short-horizon scenario that keeps every command fast.
fn small_env() -> serde_json::Value {
    serde_json::json!({ "episode_horizon": 30, "traffic_density": 20.0 })
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn run_config(dir: &Path, rail: serde_json::Value) -> PathBuf {
    let cfg = serde_json::json!({
        "name": "test",
        "env": small_env(),
        "rail": rail,
        "bc": { "epochs": 20 },
        "checkpoint_every": 2,
    });
    write_json(dir, "run.json", &cfg)
}

fn small_rail() -> serde_json::Value {
    serde_json::json!({ "directions": 3, "iterations": 6, "disc_hidden": 8, "disc_batch": 16, "disc_minibatches": 2, "hidden": 4 })
}

fn demos(dir: &Path) -> PathBuf {
    let env = write_json(dir, "env.json", &small_env());
    let out = dir.join("demos.rdem");
    let r = rail(&["gen-expert", "--config", s(&env), "--episodes", "3", "--seed", "1", "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    out
}

fn metric_rows(run: &Path) -> Vec<IterationReport> {
    let text = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    text.lines().skip(1).map(|l| IterationReport::from_csv_row(l).unwrap()).collect()
}

#[test]
fn gen_expert_is_deterministic_and_reports_what_it_wrote() {
    let dir = tempfile::tempdir().unwrap();
    let env = write_json(dir.path(), "env.json", &small_env());
    let a = dir.path().join("a.rdem");
    let b = dir.path().join("b.rdem");
    for out in [&a, &b] {
        let r = rail(&["gen-expert", "--config", s(&env), "--episodes", "4", "--seed", "9", "--out", s(out)]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        assert!(stdout(&r).contains("episodes: 4"));
        assert!(stdout(&r).contains("mean expert speed"));
    }
    let digest = |p: &Path| sha256_hex(&std::fs::read(p).unwrap());
    assert_eq!(digest(&a), digest(&b));
    let stats = std::fs::read_to_string(dir.path().join("a.rdem.stats.csv")).unwrap();
    DrivingStats::from_csv(&stats).unwrap();
}

#[test]
fn rail_seed_overrides_the_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let env = write_json(dir.path(), "env.json", &small_env());
    let by_flag = dir.path().join("flag.rdem");
    let by_env = dir.path().join("env.rdem");
    rail(&["gen-expert", "--config", s(&env), "--episodes", "2", "--seed", "3", "--out", s(&by_flag)]);
    let r = rail_env(
        &["gen-expert", "--config", s(&env), "--episodes", "2", "--seed", "100", "--out", s(&by_env)],
        &[("RAIL_SEED", "3")],
    );
    assert_eq!(code(&r), 0);
    assert_eq!(std::fs::read(&by_flag).unwrap(), std::fs::read(&by_env).unwrap());
    let bad = rail_env(&["gen-expert", "--episodes", "1", "--out", s(&by_env)], &[("RAIL_SEED", "x")]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.rdem");
    assert_eq!(code(&rail(&["gen-expert", "--episodes", "0", "--out", s(&out)])), 2);
    assert_eq!(code(&rail(&["no-such-command"])), 2);
    let typo = write_json(dir.path(), "typo.json", &serde_json::json!({ "lane_cont": 3 }));
    let r = rail(&["gen-expert", "--config", s(&typo), "--episodes", "1", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("lane_cont"));
    let invalid = write_json(dir.path(), "bad.json", &serde_json::json!({ "lane_count": 0 }));
    assert_eq!(code(&rail(&["gen-expert", "--config", s(&invalid), "--episodes", "1", "--out", s(&out)])), 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&rail(&["eval", "--expert", "--config", s(&missing)])), 2);
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("no/such/dir/x.rdem");
    let r = rail(&["gen-expert", "--episodes", "1", "--out", s(&out)]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));
}

#[test]
fn bc_run_directory_verifies_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let demos = demos(dir.path());
    let cfg = run_config(dir.path(), small_rail());
    let run = dir.path().join("bc");
    let r = rail(&["train", "--config", s(&cfg), "--algo", "bc", "--demos", s(&demos), "--out", s(&run)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(run.join("final.rckp").is_file());
    assert!(run.join("manifest.json").is_file());
    let v = rail(&["verify", s(&run)]);
    assert_eq!(code(&v), 0, "{}", stderr(&v));
    // A second run into the same directory is refused.
    let again = rail(&["train", "--config", s(&cfg), "--algo", "bc", "--demos", s(&demos), "--out", s(&run)]);
    assert_eq!(code(&again), 2);
    std::fs::write(run.join("bc_summary.csv"), "tampered\n").unwrap();
    let v = rail(&["verify", s(&run)]);
    assert_eq!(code(&v), 1);
    assert!(stderr(&v).contains("bc_summary.csv"));
}

#[test]
fn rail_metrics_match_the_schema_and_ignore_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let demos = demos(dir.path());
    let cfg = run_config(dir.path(), small_rail());
    let mut digests = Vec::new();
    for workers in ["1", "3"] {
        let run = dir.path().join(format!("rail-{workers}"));
        let r = rail(&[
            "train", "--config", s(&cfg), "--algo", "rail", "--demos", s(&demos), "--workers", workers, "--seed", "4",
            "--out", s(&run),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        let text = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
        assert_eq!(text.lines().next(), Some("iter,mean_reward,max_reward,sigma_r,disc_loss,nu,seconds"));
        let rows = metric_rows(&run);
        assert_eq!(rows.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
        digests.push(rail_core::learners::metrics_digest(&rows));
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["complete"], true);
        assert_eq!(code(&rail(&["verify", s(&run)])), 0);
        let ck = read_checkpoint(&run.join("checkpoints/iter-000004.rckp")).unwrap();
        assert_eq!(ck.meta.iteration, 4);
        assert_eq!(ck.meta.config_digest, manifest["config_digest"].as_str().unwrap());
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn interrupted_run_resumes_with_monotone_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let demos = demos(dir.path());
    let cfg = run_config(dir.path(), small_rail());
    let run = dir.path().join("run");
    let base = ["train", "--config", s(&cfg), "--algo", "rail", "--demos", s(&demos), "--out", s(&run)];
    let first = rail(&[&base[..], &["--stop-after", "3"]].concat());
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    assert_eq!(metric_rows(&run).len(), 3);
    assert!(!run.join("final.rckp").exists());
    let manifest = std::fs::read_to_string(run.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"complete\": false"));

    // Iteration 3 was not checkpointed, so it is recomputed after resuming from 2.
    let second = rail(&[&base[..], &["--resume"]].concat());
    assert_eq!(code(&second), 0, "{}", stderr(&second));
    let iters: Vec<u64> = metric_rows(&run).iter().map(|r| r.iteration).collect();
    assert_eq!(iters, vec![1, 2, 3, 4, 5, 6]);
    assert!(run.join("final.rckp").exists());
    assert_eq!(code(&rail(&["verify", s(&run)])), 0);

    // Resuming a run with a different configuration is refused.
    let other = run_config(dir.path(), serde_json::json!({ "directions": 5, "iterations": 8 }));
    let r = rail(&["train", "--config", s(&other), "--algo", "rail", "--demos", s(&demos), "--out", s(&run), "--resume"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn mismatched_init_checkpoint_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let demos = demos(dir.path());
    let cfg = run_config(dir.path(), small_rail());
    let n = HighwayConfig::default().observation_len();
    let wrong = Checkpoint::new(
        PolicyParams::zeros(PolicyShape::two_layer(n, 7, 5)).unwrap(),
        NormalizerState::new(n),
    );
    let init = dir.path().join("wrong.rckp");
    write_checkpoint(&init, &wrong).unwrap();
    let run = dir.path().join("run");
    let r = rail(&[
        "train", "--config", s(&cfg), "--algo", "rail", "--demos", s(&demos), "--init", s(&init), "--out", s(&run),
    ]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
    assert!(!run.exists());
}

#[test]
fn bc_checkpoint_initializes_rail() {
    let dir = tempfile::tempdir().unwrap();
    let demos = demos(dir.path());
    let cfg = run_config(dir.path(), small_rail());
    let bc = dir.path().join("bc");
    let mut cfg_json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    cfg_json["bc"]["hidden"] = 4.into();
    let cfg = write_json(dir.path(), "run_bc.json", &cfg_json);
    assert_eq!(code(&rail(&["train", "--config", s(&cfg), "--algo", "bc", "--demos", s(&demos), "--out", s(&bc)])), 0);
    let run = dir.path().join("rail");
    let init = bc.join("final.rckp");
    let r = rail(&[
        "train", "--config", s(&cfg), "--algo", "rail", "--demos", s(&demos), "--init", s(&init), "--out", s(&run),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(metric_rows(&run).len(), 6);
}

#[test]
fn expert_evaluation_reproduces_the_golden_fixture() {
    let r = rail(&["eval", "--expert", "--episodes", "16", "--seed", "7"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let golden = include_str!("fixtures/expert_stats_seed7.csv");
    assert_eq!(stdout(&r), golden);
}

#[test]
fn zero_weight_checkpoint_drives_like_constant_maintain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = HighwayConfig::default();
    let n = cfg.observation_len();
    let zero = Checkpoint::new(PolicyParams::zeros(PolicyShape::two_layer(n, 10, 5)).unwrap(), NormalizerState::new(n));
    let path = dir.path().join("zero.rckp");
    write_checkpoint(&path, &zero).unwrap();
    let out = dir.path().join("stats.csv");
    let r = rail(&["eval", "--checkpoint", s(&path), "--episodes", "4", "--seed", "2", "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let got = DrivingStats::from_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // Equal logits pick the first action, so speed never leaves its start value.
    let want = evaluate_policy(&mut ConstantPolicy(DrivingAction::Maintain), &cfg, 4, 2).unwrap();
    assert_eq!(got, want);
    assert_eq!(got.lane_changes, 0.0);
    let mid = (cfg.host_speed_bounds[0] + cfg.host_speed_bounds[1]) / 2.0;
    assert!((got.avg_speed - mid).abs() < 1e-9);
}

#[test]
fn eval_rejects_a_checkpoint_of_the_wrong_width() {
    let dir = tempfile::tempdir().unwrap();
    let ck = Checkpoint::new(PolicyParams::zeros(PolicyShape::linear(12, 5)).unwrap(), NormalizerState::new(12));
    let path = dir.path().join("narrow.rckp");
    write_checkpoint(&path, &ck).unwrap();
    let r = rail(&["eval", "--checkpoint", s(&path), "--episodes", "1"]);
    assert_eq!(code(&r), 2);
    let garbage = dir.path().join("garbage.rckp");
    std::fs::write(&garbage, b"RCKP0 not a checkpoint").unwrap();
    assert_eq!(code(&rail(&["eval", "--checkpoint", s(&garbage)])), 2);
}

#[test]
fn weight_export_reshapes_and_lists_valid_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let n = 147;
    let values: Vec<f64> = (0..PolicyShape::two_layer(n, 10, 5).len()).map(|i| (i % 17) as f64 * 0.125 - 1.0).collect();
    let params = PolicyParams::from_values(PolicyShape::two_layer(n, 10, 5), values).unwrap();
    let path = dir.path().join("w.rckp");
    write_checkpoint(&path, &Checkpoint::new(params.clone(), NormalizerState::new(n))).unwrap();

    let first = dir.path().join("first.csv");
    let r = rail(&["export-weights", "--checkpoint", s(&path), "--layer", "1", "--reshape", "30x49", "--out", s(&first)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = std::fs::read_to_string(&first).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.split(',').count() == 49));
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.split(',').map(|v| v.parse::<f64>().unwrap())).collect();
    assert_eq!(flat, params.layer(0).unwrap().as_slice());
    let hist = std::fs::read_to_string(dir.path().join("first.csv.hist.csv")).unwrap();
    let counts: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(counts, 1470);

    let second = dir.path().join("second.csv");
    assert_eq!(code(&rail(&["export-weights", "--checkpoint", s(&path), "--layer", "2", "--out", s(&second)])), 0);
    let text = std::fs::read_to_string(&second).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().all(|r| r.split(',').count() == 10));

    let bad = rail(&["export-weights", "--checkpoint", s(&path), "--layer", "2", "--reshape", "7x7", "--out", s(&second)]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("1x50, 2x25, 5x10, 10x5, 25x2, 50x1"), "{}", stderr(&bad));
    assert_eq!(code(&rail(&["export-weights", "--checkpoint", s(&path), "--layer", "3", "--out", s(&second)])), 2);
}
