//! End-to-end checks of the command-line binary: subcommand wiring,
//! config/override handling, artifact layout, determinism, and
//! stage-tagged failures.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_peervote"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "peervote {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("binary runs");
    assert!(!out.status.success(), "peervote {args:?} unexpectedly passed");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A config small enough that unoptimized subcommand runs stay quick.
fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("config.toml");
    let text = format!(
        "[dataset.generate]\n\
         num_classes = 8\n\
         zipf_exponent = 1.6\n\
         instances_total = 800\n\
         scene_size_min = 5\n\
         scene_size_max = 12\n\
         feature_dim = 6\n\
         \n\
         [train]\n\
         epochs = 4\n\
         batch_size = 32\n\
         {extra}"
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn experiment_emits_summary_with_all_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    let out_dir = dir.path().join("run");
    let out = run_ok(&[
        "experiment",
        "--config",
        &config,
        "--seed",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);

    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "model,config,mR@20,mR@50,mR@100,R@20,R@50,R@100,mean");
    assert!(lines[1].starts_with("baseline,HBT,"));
    assert!(lines[2].starts_with("peer0,HBT,"));
    assert!(lines[3].starts_with("peer1,B,"));
    assert!(lines[4].starts_with("peer2,T,"));
    assert!(lines[5].starts_with("ensemble,HBT_B_T,"));
    assert_eq!(lines.len(), 6);

    // The summary is echoed to stdout for table use.
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ensemble,HBT_B_T,"), "stdout: {stdout}");
}

#[test]
fn experiment_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    for out in ["a", "b"] {
        run_ok(&[
            "experiment",
            "--config",
            &config,
            "--seed",
            "9",
            "--out",
            dir.path().join(out).to_str().unwrap(),
        ]);
    }
    for name in ["summary.csv", "ensemble_metrics.csv", "predictions.txt", "model.txt"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn all_reference_layouts_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    for (i, spec) in [
        "H_B_T",
        "HBT_B_T",
        "HBT_BT_T",
        "HB_HT_BT",
        "HBT_HT_BT",
        "HBT_T",
        "HBT_B",
        "HBT_H_B_T",
        "HBT_HB_BT_HT",
    ]
    .iter()
    .enumerate()
    {
        let out_dir = dir.path().join(format!("run{i}"));
        run_ok(&[
            "experiment",
            "--config",
            &config,
            "--seed",
            "3",
            "--peers",
            spec,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
        assert!(
            summary.contains(&format!("ensemble,{spec},")),
            "{spec}: {summary}"
        );
    }
}

#[test]
fn stagewise_pipeline_chains_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    let out = dir.path().join("steps");
    let out_s = out.to_str().unwrap();

    run_ok(&["generate", "--config", &config, "--seed", "7", "--out", out_s]);
    assert!(out.join("dataset.txt").exists());
    assert!(out.join("frequencies.txt").exists());

    run_ok(&["partition", "--config", &config, "--seed", "7", "--out", out_s]);
    assert!(out.join("partition.txt").exists());

    run_ok(&["train", "--config", &config, "--seed", "7", "--out", out_s]);
    assert!(out.join("model.txt").exists());
    assert!(out.join("training.txt").exists());

    let model = out.join("model.txt");
    let dataset = out.join("dataset.txt");
    run_ok(&[
        "predict",
        "--config",
        &config,
        "--out",
        out_s,
        "--model",
        model.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
    ]);
    let predictions = out.join("predictions.txt");
    assert!(predictions.exists());

    let vote_out = run_ok(&[
        "vote",
        "--config",
        &config,
        "--out",
        out_s,
        "--predictions",
        predictions.to_str().unwrap(),
    ]);
    assert!(out.join("votes.txt").exists());
    assert!(out.join("vote_metrics.csv").exists());
    let stdout = String::from_utf8_lossy(&vote_out.stdout);
    assert!(stdout.contains("mR@50:"), "stdout: {stdout}");

    run_ok(&[
        "evaluate",
        "--config",
        &config,
        "--out",
        out_s,
        "--predictions",
        predictions.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
    ]);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("ensemble,-,"), "{summary}");

    // Group statistics come from the dataset-derived partition.
    let ensemble_csv = fs::read_to_string(out.join("ensemble_metrics.csv")).unwrap();
    assert!(ensemble_csv.contains("group_mean,tail,"), "{ensemble_csv}");
}

#[test]
fn vote_supports_peer_subset_ablation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w");
    fs::create_dir_all(&out).unwrap();
    let predictions = dir.path().join("preds.txt");
    fs::write(
        &predictions,
        "peervote.predictions.v1 3 4\n\
         0 0 2 1 0.6 2 0.7 2 0.4\n\
         1 0 1 1 0.9 3 0.3 2 0.2\n",
    )
    .unwrap();

    run_ok(&[
        "vote",
        "--out",
        out.to_str().unwrap(),
        "--predictions",
        predictions.to_str().unwrap(),
        "--peers-subset",
        "0,2",
        "--ks",
        "1,2",
    ]);
    let votes = fs::read_to_string(out.join("votes.txt")).unwrap();
    // Record 0 under peers {0, 2}: singletons 1@0.6 vs 2@0.4.
    assert!(votes.contains("0 0 2 1 0.6"), "{votes}");

    let stderr = run_err(&[
        "vote",
        "--out",
        out.to_str().unwrap(),
        "--predictions",
        predictions.to_str().unwrap(),
        "--peers-subset",
        "0,9",
    ]);
    assert!(stderr.contains("stage 'vote'"), "stderr: {stderr}");
    assert!(stderr.contains("out of range"), "stderr: {stderr}");
}

#[test]
fn failures_are_stage_tagged_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");

    // Missing predictions file.
    let stderr = run_err(&[
        "vote",
        "--out",
        out.to_str().unwrap(),
        "--predictions",
        dir.path().join("nope.txt").to_str().unwrap(),
    ]);
    assert!(stderr.contains("stage 'load'"), "stderr: {stderr}");

    // Unparseable peer layout.
    let stderr = run_err(&[
        "experiment",
        "--out",
        out.to_str().unwrap(),
        "--peers",
        "HBT_X",
    ]);
    assert!(stderr.contains("stage 'config'"), "stderr: {stderr}");
    assert!(stderr.contains("position"), "stderr: {stderr}");

    // Missing config file.
    let stderr = run_err(&[
        "experiment",
        "--out",
        out.to_str().unwrap(),
        "--config",
        dir.path().join("absent.toml").to_str().unwrap(),
    ]);
    assert!(stderr.contains("stage 'config'"), "stderr: {stderr}");

    // A dataset path that does not exist fails in the dataset stage.
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[dataset]\npath = \"missing_dataset.txt\"\n").unwrap();
    let stderr = run_err(&[
        "experiment",
        "--out",
        out.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(stderr.contains("stage 'dataset'"), "stderr: {stderr}");
}

#[test]
fn generate_requires_a_generator_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("path_only.toml");
    fs::write(&config, "[dataset]\npath = \"somewhere.txt\"\n").unwrap();
    let stderr = run_err(&[
        "generate",
        "--out",
        dir.path().join("g").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(stderr.contains("stage 'dataset'"), "stderr: {stderr}");
}

#[test]
fn generate_same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    for out in ["g1", "g2"] {
        run_ok(&[
            "generate",
            "--config",
            &config,
            "--seed",
            "21",
            "--out",
            dir.path().join(out).to_str().unwrap(),
        ]);
    }
    let a = fs::read(dir.path().join("g1/dataset.txt")).unwrap();
    let b = fs::read(dir.path().join("g2/dataset.txt")).unwrap();
    assert_eq!(a, b);
}
