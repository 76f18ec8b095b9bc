//! Command bodies. Each takes the resolved configuration and writes its
//! human-readable output to `out`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use shardnet_core::data::{
    featurize, frame, load_actitracker_csv, read_cache, synth_generate, write_cache, AccelSample, FrameConfig,
    LabelSet, SynthConfig,
};
use shardnet_core::engine::RoundConfig;
use shardnet_core::eval::{benchmark_speedup, evaluate as score, Evaluation, SpeedupJob, SpeedupReport};
use shardnet_core::model_file::{load_model, save_model};
use shardnet_core::pipeline::{prepare, train_model, Prepared, TrainPlan, Trained};
use shardnet_core::DeepModel;

use crate::config::{DataSource, RunConfig};
use crate::CliError;

fn frame_config(cfg: &RunConfig) -> FrameConfig {
    FrameConfig {
        window_len: cfg.window_len,
        step: cfg.step,
        max_gap: None,
    }
}

pub fn load_samples(cfg: &RunConfig) -> Result<Vec<AccelSample>, CliError> {
    match &cfg.source {
        None => Err(CliError::Usage(
            "data.source is required (a CSV path or `synthetic`)".into(),
        )),
        Some(DataSource::Synthetic) => Ok(synth_generate(&SynthConfig {
            per_class: cfg.synth_per_class,
            noise_sigma: cfg.synth_noise,
            users: cfg.synth_users,
            window_len: cfg.window_len,
            seed: cfg.seed(),
        })),
        Some(DataSource::Csv(path)) => {
            if !path.exists() {
                return Err(CliError::Usage(format!("{}: no such file", path.display())));
            }
            let (samples, report) = load_actitracker_csv(path)?;
            if report.malformed > 0 {
                log::warn!("{}: skipped {} malformed records", path.display(), report.malformed);
            }
            Ok(samples)
        }
    }
}

pub fn prepared(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let samples = load_samples(cfg)?;
    Ok(prepare(
        &samples,
        &LabelSet::default(),
        frame_config(cfg),
        cfg.test_fraction,
        cfg.split_by_user,
        cfg.seed(),
    )?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn ingest(cfg: &RunConfig, cache: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let samples = load_samples(cfg)?;
    let labels = LabelSet::default();
    let windows = frame(&samples, frame_config(cfg));
    let data = featurize(&windows, cfg.window_len, labels.len())?;
    write_cache(cache, &data)?;
    let (counts, unlabeled) = data.label_histogram();
    writeln!(out, "samples: {}", samples.len())?;
    writeln!(out, "windows: {}", data.len())?;
    for (name, n) in labels.names().iter().zip(&counts) {
        writeln!(out, "  {name}: {n}")?;
    }
    writeln!(out, "  unlabeled: {unlabeled}")?;
    writeln!(out, "wrote {}", cache.display())?;
    Ok(())
}

pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<Trained, CliError> {
    let prep = prepared(cfg)?;
    if cfg.rounds.max_rounds == 0 {
        log::warn!("train.max_rounds is 0; saving the initialized model");
        writeln!(out, "warning: train.max_rounds is 0; saving the initialized model")?;
    }
    let plan = TrainPlan {
        layer_dims: cfg.layer_dims.clone(),
        pretrain: cfg.pretrain,
        skip_pretrain: cfg.skip_pretrain,
        rounds: cfg.rounds,
        workers: cfg.workers,
    };
    let mut log = create(&cfg.run_log_path)?;
    let trained = train_model(&prep, &plan, Some(&mut log))?;
    log.flush()?;
    save_model(&cfg.model_path, &trained.result.model, Some(&prep.meta()))?;
    write_cache(&cfg.test_cache_path, &prep.test_unscaled)?;

    writeln!(out, "train windows: {}, test windows: {}", prep.train.len(), prep.test.len())?;
    if let Some(p) = &trained.pretrain {
        for (i, run) in p.runs.iter().enumerate() {
            let last = run.rounds.last().and_then(|r| r.shard_losses.iter().copied().reduce(f64::max));
            writeln!(out, "pretrained layer {i}: {} epochs, final shard loss {:.5}", run.len(), last.unwrap_or(f64::NAN))?;
        }
    }
    let r = &trained.result;
    writeln!(out, "rounds: {}, best round: {}", r.run.len(), r.best_round.map_or("-".into(), |b| b.to_string()))?;
    let test = prep.test.labeled();
    if !test.is_empty() {
        writeln!(out, "test error: {:.4}", score(&r.model, &test)?.error_rate)?;
    }
    writeln!(out, "wrote {}", cfg.model_path.display())?;
    writeln!(out, "wrote {}", cfg.run_log_path.display())?;
    writeln!(out, "wrote {}", cfg.test_cache_path.display())?;
    Ok(trained)
}

pub fn evaluate(cfg: &RunConfig, confusion_csv: Option<&Path>, out: &mut dyn Write) -> Result<Evaluation, CliError> {
    let (model, meta) = load_model(&cfg.model_path)?;
    let data = read_cache(&cfg.test_cache_path)?;
    if data.feature_len() != model.input_dim() {
        return Err(CliError::Usage(format!(
            "feature length mismatch: {} has {} features, the model expects {}",
            cfg.test_cache_path.display(),
            data.feature_len(),
            model.input_dim()
        )));
    }
    let mut labeled = data.labeled();
    if labeled.is_empty() {
        return Err(CliError::Usage(format!("{} holds no labeled windows", cfg.test_cache_path.display())));
    }
    if let Some(scaler) = meta.as_ref().and_then(|m| m.scaler.as_ref()) {
        labeled.features = scaler.apply(&labeled.features)?;
    }
    let eval = score(&model, &labeled)?;
    let names: Vec<String> = match &meta {
        Some(m) => m.labels.clone(),
        None => (0..model.label_count()).map(|i| i.to_string()).collect(),
    };
    let csv = eval.confusion.normalize().to_csv(&names);
    writeln!(out, "windows: {}", labeled.len())?;
    writeln!(out, "error: {:.6}", eval.error_rate)?;
    write!(out, "{csv}")?;
    if let Some(p) = confusion_csv {
        let mut f = create(p)?;
        f.write_all(csv.as_bytes())?;
        f.flush()?;
    }
    Ok(eval)
}

pub fn benchmark(cfg: &RunConfig, out: &mut dyn Write) -> Result<SpeedupReport, CliError> {
    let prep = prepared(cfg)?;
    let train = prep.train.labeled();
    let init = DeepModel::init(train.features.cols(), &cfg.bench_layer_dims, prep.labels.len(), cfg.seed())?;
    let job = SpeedupJob {
        train,
        init,
        cfg: RoundConfig {
            max_rounds: cfg.bench_rounds,
            schedule: cfg.bench_schedule,
            ..cfg.rounds
        },
    };
    let report = benchmark_speedup(&job, &cfg.bench_workers, cfg.bench_repetitions)?;
    write!(out, "{}", report.to_table())?;
    let mut f = create(&cfg.report_path)?;
    f.write_all(report.to_csv().as_bytes())?;
    f.flush()?;
    writeln!(out, "wrote {}", cfg.report_path.display())?;
    Ok(report)
}
