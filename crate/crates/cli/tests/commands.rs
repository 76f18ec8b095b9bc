use std::path::Path;
use std::process::Command;

use shardnet_cli::main_with_args;
use shardnet_core::data::read_cache;
use shardnet_core::engine::TrainRun;
use shardnet_core::model_file::load_model;
use shardnet_core::Parameters;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["shardnet"];
    full.extend_from_slice(args);
    let code = main_with_args(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// A small synthetic job that trains in well under a second.
fn small_config(dir: &Path, extra: &str) -> String {
    let p = dir.join("run.conf");
    std::fs::write(
        &p,
        format!(
            "[data]\nsource = synthetic\nsynth_per_class = 24\n\
             [model]\nlayer_dims = 16\n\
             [pretrain]\nepochs = 2\n\
             [train]\nmax_rounds = 3\niterations_per_map = 5\nbatch_size = 20\n\
             [run]\nworkers = 2\n\
             [output]\nmodel = {m}\nrun_log = {l}\ntest_cache = {t}\nreport = {r}\n\
             [benchmark]\nrounds = 1\nrepetitions = 1\nlayer_dims = 8\n{extra}",
            m = dir.join("model.shardnet").display(),
            l = dir.join("run.jsonl").display(),
            t = dir.join("test.shardset").display(),
            r = dir.join("speedup.csv").display(),
        ),
    )
    .unwrap();
    p.display().to_string()
}

#[test]
fn print_config_shows_resolved_values() {
    let (code, out, _) = run(&["--seed", "5", "--workers", "3", "--print-config", "train", "--skip-pretrain"]);
    assert_eq!(code, 0);
    assert!(out.contains("seed = 5"));
    assert!(out.contains("workers = 3"));
    assert!(out.contains("skip = true"));
    assert!(out.contains("layer_dims = 128,128"));
}

#[test]
fn config_errors_exit_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "[train]\nlerning_rate = 0.1\n");
    let (code, _, err) = run(&["--config", &cfg, "train"]);
    assert_eq!(code, 2);
    assert!(err.contains("train.lerning_rate"), "{err}");

    let cfg = small_config(dir.path(), "[pretrain]\ncorruption_prob = 1.5\n");
    let (code, _, err) = run(&["--config", &cfg, "train"]);
    assert_eq!(code, 2);
    assert!(err.contains("pretrain.corruption_prob"), "{err}");

    let (code, _, err) = run(&["train"]);
    assert_eq!(code, 2);
    assert!(err.contains("data.source"), "{err}");

    let (code, _, _) = run(&["--config", &cfg, "--workers", "1,2", "train"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, 2);
}

#[test]
fn ingest_missing_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = dir.path().join("c.shardset");
    let (code, _, err) = run(&["ingest", "--csv", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains(missing.to_str().unwrap()), "{err}");
}

#[test]
fn ingest_csv_and_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("raw.txt");
    let mut text = String::new();
    for i in 0..300 {
        text.push_str(&format!("33,Jogging,{},{:.2},12.68,0.50;\n", 49105962326000i64 + i * 50_000_000, (i % 7) as f32 * 0.3));
    }
    text.push_str("garbage line\n");
    std::fs::write(&csv, text).unwrap();
    let cache = dir.path().join("csv.shardset");
    let (code, out, err) = run(&["ingest", "--csv", csv.to_str().unwrap(), "--out", cache.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("windows: 2"), "{out}");
    assert!(out.contains("jogging: 2"), "{out}");
    assert_eq!(read_cache(&cache).unwrap().len(), 2);

    let a = dir.path().join("a.shardset");
    let b = dir.path().join("b.shardset");
    for p in [&a, &b] {
        let (code, out, _) = run(&["--seed", "3", "ingest", "--synthetic", "--out", p.to_str().unwrap(), "--step", "200"]);
        assert_eq!(code, 0);
        assert!(out.contains("walking: 500"), "{out}");
        assert!(out.contains("unlabeled: 0"));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let (code, out, err) = run(&["--config", &cfg, "train"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("pretrained layer 0: 2 epochs"), "{out}");
    let (model, meta) = load_model(dir.path().join("model.shardnet")).unwrap();
    assert_eq!(model.layer_dims(), vec![303, 16, 6]);
    assert_eq!(meta.unwrap().labels[5], "lying down");
    let log = TrainRun::read_jsonl(std::io::BufReader::new(std::fs::File::open(dir.path().join("run.jsonl")).unwrap())).unwrap();
    assert_eq!(log.len(), 3);

    let csv = dir.path().join("confusion.csv");
    let (code, out, err) = run(&["--config", &cfg, "evaluate", "--confusion-csv", csv.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("error: "));
    let written = std::fs::read_to_string(&csv).unwrap();
    assert!(written.starts_with("true\\predicted,walking,jogging"));
    for line in written.lines().skip(1) {
        let sum: f64 = line.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!(sum == 0.0 || (sum - 1.0).abs() < 1e-5, "{line}");
    }
}

#[test]
fn skip_pretrain_and_zero_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let (code, out, _) = run(&["--config", &cfg, "train", "--skip-pretrain", "--max-rounds", "0"]);
    assert_eq!(code, 0);
    assert!(!out.contains("pretrained layer"));
    assert!(out.contains("warning: train.max_rounds is 0"));
    let (model, _) = load_model(dir.path().join("model.shardnet")).unwrap();
    let init = shardnet_core::DeepModel::init(303, &[16], 6, 0).unwrap();
    assert!(model.bit_eq(&init));
    assert_eq!(std::fs::read_to_string(dir.path().join("run.jsonl")).unwrap(), "");
}

#[test]
fn evaluate_rejects_mismatched_features() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    assert_eq!(run(&["--config", &cfg, "train", "--max-rounds", "1"]).0, 0);
    let other = dir.path().join("short.shardset");
    let (code, _, _) = run(&["ingest", "--synthetic", "--window-len", "100", "--out", other.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (code, _, err) = run(&["--config", &cfg, "evaluate", "--data", other.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("153") && err.contains("303"), "{err}");
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "[train]\nlearning_rate = 3e38\n");
    let (code, _, err) = run(&["--config", &cfg, "train", "--skip-pretrain"]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("non-finite"), "{err}");
}

#[test]
fn benchmark_rows_follow_worker_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let (code, out, err) = run(&["--config", &cfg, "--workers", "1", "benchmark", "--repetitions", "2"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("repetitions: 2"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("speedup.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].ends_with(",1.000000"));

    let (code, _, _) = run(&["--config", &cfg, "--workers", "1,2,4", "benchmark"]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(dir.path().join("speedup.csv")).unwrap();
    let workers: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(workers, vec!["1", "2", "4"]);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_shardnet");
    let ok = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("benchmark"));
    let bad = Command::new(bin).args(["serve", "--model", "/nonexistent/model.shardnet"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("/nonexistent/model.shardnet"));
}
