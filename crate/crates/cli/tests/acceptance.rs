//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 6 and 7 are reported but do not fail the target: 6 is a measured
//! finding and 7 needs at least four hardware threads.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shardnet_core::data::{
    holdout, read_cache_from, spectrogram, synth_generate, write_cache_to, ActivityWindow, FrameConfig, LabelSet,
    LabeledData, SynthConfig,
};
use shardnet_core::engine::{
    reduce_average, train_distributed, train_sequential, train_with_validator, MapSchedule, PartialModel, RoundConfig,
    TrainRun, Validation, Weighting,
};
use shardnet_core::eval::{
    benchmark_speedup, evaluate, shallow_baselines, BaselineConfig, ConfusionMatrix, SpeedupJob,
};
use shardnet_core::model_file::{load_model, save_model, ModelMeta};
use shardnet_core::pipeline::{prepare, train_model, TrainPlan};
use shardnet_core::pretrain::PretrainConfig;
use shardnet_core::service::{InferenceRequest, Predictor};
use shardnet_core::{DeepModel, LossKind, Matrix, Parameters, Targets};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn within(started: Instant, limit: Duration) -> (bool, String) {
    let e = started.elapsed();
    (e < limit, format!("{:.1}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

// ---- 1. gradient oracle ----

fn f64_loss(layers: &[(usize, usize, Vec<f64>, Vec<f64>)], x: &[Vec<f64>], y: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let mut a = row.clone();
        for (li, (n_in, n_out, w, b)) in layers.iter().enumerate() {
            let z: Vec<f64> = (0..*n_out)
                .map(|j| b[j] + (0..*n_in).map(|i| a[i] * w[i * n_out + j]).sum::<f64>())
                .collect();
            a = if li + 1 < layers.len() { z.into_iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect() } else { z };
        }
        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        total += m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - a[label];
    }
    total / x.len() as f64
}

fn gradient_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut models, mut checked, mut worst) = (0, 0, 0.0f64);
    while models < 120 {
        let input = rng.random_range(2..=4);
        let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=4)).collect();
        let labels = rng.random_range(2..=3);
        let model = DeepModel::init(input, &hidden, labels, rng.random()).unwrap();
        if model.parameter_count() > 50 {
            continue;
        }
        models += 1;
        let rows = rng.random_range(1..=4);
        let x: Vec<Vec<f64>> = (0..rows).map(|_| (0..input).map(|_| rng.random_range(-1.0f32..1.0) as f64).collect()).collect();
        let y: Vec<usize> = (0..rows).map(|_| rng.random_range(0..labels)).collect();
        let xm = Matrix::from_vec(rows, input, x.iter().flatten().map(|&v| v as f32).collect()).unwrap();
        let grads = model.backprop(&xm, Targets::Labels(&y), LossKind::SoftmaxCrossEntropy).unwrap();
        let base: Vec<_> = model
            .layers()
            .map(|l| {
                (
                    l.in_dim(),
                    l.out_dim(),
                    l.weights.as_slice().iter().map(|&v| v as f64).collect::<Vec<_>>(),
                    l.biases.iter().map(|&v| v as f64).collect::<Vec<_>>(),
                )
            })
            .collect();
        let eps = 1e-3;
        for (li, g) in grads.layers.iter().enumerate() {
            let analytic: Vec<f64> = g.weights.as_slice().iter().chain(&g.biases).map(|&v| v as f64).collect();
            for (k, &a) in analytic.iter().enumerate() {
                let nudge = |d: f64| {
                    let mut p = base.clone();
                    let nw = p[li].2.len();
                    if k < nw {
                        p[li].2[k] += d;
                    } else {
                        p[li].3[k - nw] += d;
                    }
                    f64_loss(&p, &x, &y)
                };
                let numeric = (nudge(eps) - nudge(-eps)) / (2.0 * eps);
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
                checked += 1;
            }
        }
    }
    let (fast, time) = within(started, Duration::from_secs(10));
    outcome(
        worst <= 1e-3 && fast,
        format!("{models} models, {checked} parameters, worst relative error {worst:.2e}, {time}"),
    )
}

// ---- 2. one-worker equivalence ----

fn separable(rows: usize, seed: u64) -> LabeledData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(rows * 12);
    for i in 0..rows {
        for j in 0..12 {
            x.push(if j / 2 == i % 6 { 0.8 } else { 0.2 } + rng.random_range(-0.2f32..0.2));
        }
    }
    LabeledData::new(Matrix::from_vec(rows, 12, x).unwrap(), (0..rows).map(|i| i % 6).collect(), 6).unwrap()
}

fn one_worker_equivalence() -> Outcome {
    let started = Instant::now();
    let data = separable(900, 2);
    let mut all = true;
    let mut notes = Vec::new();
    for schedule in [MapSchedule::FixedIterations, MapSchedule::FullPass] {
        let cfg = RoundConfig {
            max_rounds: 5,
            patience: 10,
            seed: 42,
            schedule,
            ..Default::default()
        };
        let init = DeepModel::init(12, &[16, 8], 6, 7).unwrap();
        let dist = train_distributed(&data, init.clone(), &cfg, 1).unwrap();
        let (fit, val) = holdout(&data, cfg.validation_fraction, cfg.seed).unwrap();
        let seq = train_sequential(&fit, &val, init, &cfg).unwrap();
        let same = dist.final_model.bit_eq(&seq.final_model) && dist.model.bit_eq(&seq.model) && dist.run.len() == 5;
        all &= same;
        notes.push(format!("{schedule:?} {}", if same { "bit-identical" } else { "differs" }));
    }
    let (fast, time) = within(started, Duration::from_secs(30));
    outcome(all && fast, format!("{}, {time}", notes.join(", ")))
}

// ---- 3. averaging laws ----

fn averaging_laws() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_ulp = 0i64;
    let mut permutations_equal = true;
    for trial in 0..50 {
        let m = DeepModel::init(rng.random_range(2..20), &[rng.random_range(2..20)], 6, trial).unwrap();
        let k = rng.random_range(1..12);
        let same: Vec<_> = (0..k)
            .map(|s| PartialModel { round: 0, shard_id: s, trained_on: rng.random_range(1..500), mean_loss: 0.0, params: m.clone() })
            .collect();
        for w in [Weighting::Uniform, Weighting::BySampleCount] {
            let avg = reduce_average(&same, w).unwrap();
            for (a, b) in avg.tensors().iter().zip(m.tensors()) {
                for (x, y) in a.iter().zip(b) {
                    max_ulp = max_ulp.max((x.to_bits() as i64 - y.to_bits() as i64).abs());
                }
            }
        }
        let mut distinct: Vec<_> = (0..k)
            .map(|s| PartialModel {
                round: 0,
                shard_id: s,
                trained_on: rng.random_range(1..500),
                mean_loss: 0.0,
                params: DeepModel::init(m.input_dim(), &[m.layer_dims()[1]], 6, 1000 + s as u64).unwrap(),
            })
            .collect();
        let reference = reduce_average(&distinct, Weighting::Uniform).unwrap();
        for _ in 0..5 {
            rand::seq::SliceRandom::shuffle(distinct.as_mut_slice(), &mut rng);
            permutations_equal &= reduce_average(&distinct, Weighting::Uniform).unwrap().bit_eq(&reference);
        }
    }
    let (fast, time) = within(started, Duration::from_secs(1));
    outcome(
        max_ulp <= 1 && permutations_equal && fast,
        format!("max {max_ulp} ulp from identical copies, permutations exact: {permutations_equal}, {time}"),
    )
}

// ---- 4. spectrogram oracle ----

fn naive_features(w: &ActivityWindow) -> Vec<f64> {
    let n = w.len();
    w.channels
        .iter()
        .flat_map(|c| {
            let mean = c.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            let x: Vec<f64> = c
                .iter()
                .enumerate()
                .map(|(i, &v)| (v as f64 - mean) * (0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos()))
                .collect();
            (0..=n / 2)
                .map(|k| {
                    let (re, im) = x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                        let a = -std::f64::consts::TAU * ((k * t) % n) as f64 / n as f64;
                        (re + v * a.cos(), im + v * a.sin())
                    });
                    (re * re + im * im).sqrt().ln_1p()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn spectrogram_oracle() -> Outcome {
    let started = Instant::now();
    let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol * b.abs().max(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let offset = rng.random_range(-10.0f32..10.0);
        let scale = rng.random_range(0.1f32..5.0);
        let triples: Vec<[f32; 3]> =
            (0..200).map(|_| std::array::from_fn(|_| offset + scale * rng.random_range(-1.0f32..1.0))).collect();
        let w = ActivityWindow::from_triples(&triples, None, 0);
        let got = spectrogram(&w, 200).unwrap().values;
        for (g, o) in got.iter().zip(naive_features(&w)) {
            worst = worst.max((*g as f64 - o).abs() / o.abs().max(1e-3));
        }
    }
    let tone: Vec<[f32; 3]> = (0..200)
        .map(|t| {
            let v = (std::f64::consts::TAU * 2.0 * t as f64 / 20.0).sin() as f32;
            [v, v, v]
        })
        .collect();
    let f = spectrogram(&ActivityWindow::from_triples(&tone, None, 0), 200).unwrap().values;
    let peak = (0..101).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();

    let signal: Vec<f32> = (0..200).map(|_| rng.random_range(-3.0f32..3.0)).collect();
    let spectrum = shardnet_core::data::channel_spectrum(&signal).unwrap();
    let freq_energy: f64 = spectrum.iter().map(|c| c.norm_sqr()).sum();
    let mean = signal.iter().map(|&v| v as f64).sum::<f64>() / 200.0;
    let time_energy: f64 = signal
        .iter()
        .enumerate()
        .map(|(i, &v)| ((v as f64 - mean) * (0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / 200.0).cos())).powi(2))
        .sum();
    let parseval = close(freq_energy, 200.0 * time_energy, 1e-3);
    let (fast, time) = within(started, Duration::from_secs(30));
    outcome(
        worst <= 1e-4 && peak == 20 && parseval && fast,
        format!("1000 windows, worst relative error {worst:.2e}, 2 Hz peak at bin {peak}, Parseval {parseval}, {time}"),
    )
}

// ---- 5, 6 and 9: synthetic pipeline ----

struct Run {
    error: f64,
    baselines: [f64; 2],
    model: DeepModel,
    meta: ModelMeta,
}

fn synthetic_run(sigma: f32, dims: &[usize], seed: u64, baselines: bool) -> Run {
    let samples = synth_generate(&SynthConfig::new(500, sigma, seed));
    let prep = prepare(&samples, &LabelSet::default(), FrameConfig::default(), 0.2, true, seed).unwrap();
    let plan = TrainPlan {
        layer_dims: dims.to_vec(),
        pretrain: PretrainConfig { seed, ..Default::default() },
        skip_pretrain: false,
        rounds: RoundConfig { seed, max_rounds: 30, ..Default::default() },
        workers: 4,
    };
    let trained = train_model(&prep, &plan, None).unwrap();
    let error = evaluate(&trained.result.model, &prep.test.labeled()).unwrap().error_rate;
    let baselines = if baselines {
        let (train, test) = prep.baseline_splits();
        let t = shallow_baselines(&train, &test, &BaselineConfig::default()).unwrap();
        [t.rows[0].error, t.rows[1].error]
    } else {
        [f64::NAN; 2]
    };
    Run { error, baselines, model: trained.result.model, meta: prep.meta() }
}

fn end_to_end(keep: &mut Option<(DeepModel, ModelMeta)>) -> Outcome {
    let started = Instant::now();
    let mut accs = Vec::new();
    let mut beats = true;
    let mut notes = Vec::new();
    for seed in 0..3 {
        let r = synthetic_run(0.1, &[128, 128], seed, true);
        accs.push(1.0 - r.error);
        beats &= r.error <= r.baselines[0] && r.error <= r.baselines[1];
        notes.push(format!("seed {seed}: deep {:.4} mlp {:.4} centroid {:.4}", r.error, r.baselines[0], r.baselines[1]));
        if seed == 0 {
            *keep = Some((r.model, r.meta));
        }
    }
    let med = median(accs);
    let (fast, time) = within(started, Duration::from_secs(600));
    outcome(
        med >= 0.95 && beats && fast,
        format!("median accuracy {med:.4}; {}; {time}", notes.join("; ")),
    )
}

fn depth_trend() -> Outcome {
    let one: Vec<f64> = (0..3).map(|s| synthetic_run(0.4, &[128], s, false).error).collect();
    let three: Vec<f64> = (0..3).map(|s| synthetic_run(0.4, &[128, 128, 128], s, false).error).collect();
    let (m1, m3) = (median(one.clone()), median(three.clone()));
    outcome(
        m3 <= m1,
        format!("median error 3 layers {m3:.4} vs 1 layer {m1:.4} (per seed {three:.4?} vs {one:.4?})"),
    )
}

// ---- 7. speedup ----

fn speedup() -> Outcome {
    let started = Instant::now();
    let samples = synth_generate(&SynthConfig::new(500, 0.1, 0));
    let prep = prepare(&samples, &LabelSet::default(), FrameConfig::default(), 0.2, true, 0).unwrap();
    let train = prep.train.labeled();
    let job = SpeedupJob {
        init: DeepModel::init(train.features.cols(), &[256, 256, 256], 6, 0).unwrap(),
        train,
        cfg: RoundConfig { max_rounds: 10, schedule: MapSchedule::FullPass, ..Default::default() },
    };
    let report = benchmark_speedup(&job, &[1, 2, 4], 3).unwrap();
    let s4 = report.entry(4).unwrap().speedup;
    let times: Vec<String> = report.entries.iter().map(|e| format!("{}w {:.2}s", e.worker_count, e.wall_seconds)).collect();
    let (fast, time) = within(started, Duration::from_secs(300));
    outcome(
        report.is_monotone() && s4 >= 1.3 && fast,
        format!(
            "{}; speedup at 4 workers {s4:.3}; {} hardware thread(s); {time}",
            times.join(", "),
            report.available_parallelism
        ),
    )
}

// ---- 8. confusion matrix ----

fn confusion_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth: Vec<usize> = (0..1000).map(|_| rng.random_range(0..6)).collect();
    let guess: Vec<usize> = (0..1000).map(|_| rng.random_range(0..6)).collect();
    let cm = ConfusionMatrix::from_predictions(&truth, &guess, 6).unwrap();
    let norm = cm.normalize();
    let rows_ok = (0..6).all(|t| (norm.row(t).iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    let perfect = ConfusionMatrix::from_predictions(&truth, &truth, 6).unwrap().normalize();
    let identity = (0..6).all(|t| (0..6).all(|p| perfect.row(t)[p] == if t == p { 1.0 } else { 0.0 }));
    let data = separable(333, 9);
    let eval = evaluate(&DeepModel::init(12, &[5], 6, 0).unwrap(), &data).unwrap();
    let totals = cm.total() == 1000 && eval.confusion.total() == 333;
    outcome(
        rows_ok && identity && totals,
        format!("rows sum to 1: {rows_ok}, totals match: {totals}, perfect predictor is identity: {identity}"),
    )
}

// ---- 9. serialization and serving ----

fn serialization(trained: Option<&(DeepModel, ModelMeta)>) -> Outcome {
    let Some((model, meta)) = trained else {
        return outcome(false, "no trained model from criterion 5");
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.shardnet");
    save_model(&path, model, Some(meta)).unwrap();
    let (back, back_meta) = load_model(&path).unwrap();
    let model_ok = back.bit_eq(model) && back_meta.as_ref() == Some(meta);

    let samples = synth_generate(&SynthConfig::new(30, 0.1, 77));
    let prep = prepare(&samples, &LabelSet::default(), FrameConfig::default(), 0.2, false, 77).unwrap();
    let mut buf = Vec::new();
    write_cache_to(&mut buf, &prep.train).unwrap();
    let cache = read_cache_from(buf.as_slice()).unwrap();
    let cache_ok = cache.labels == prep.train.labels
        && cache.features.as_slice().iter().zip(prep.train.features.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());

    let predictor = Predictor::new(back, back_meta.unwrap()).unwrap();
    let fresh = synth_generate(&SynthConfig::new(6, 0.1, 1234));
    let mut served = Vec::new();
    for k in 0..6 {
        let triples: Vec<[f32; 3]> =
            fresh.iter().filter(|s| s.label == Some(k)).take(200).map(|s| [s.x, s.y, s.z]).collect();
        let resp = predictor
            .infer(&InferenceRequest { device_id: format!("class-{k}"), sampling_hz: 20.0, samples: triples })
            .unwrap();
        served.push(resp.activity == meta.labels[k]);
    }
    let serve_ok = served.iter().all(|&b| b);
    outcome(
        model_ok && cache_ok && serve_ok,
        format!("model round trip {model_ok}, cache round trip {cache_ok}, class-k requests answered k: {served:?}"),
    )
}

// ---- 10. early stopping ----

fn early_stopping() -> Outcome {
    let script = [0.90, 0.70, 0.60, 0.65, 0.50, 0.55, 0.52, 0.58, 0.60, 0.61];
    let data = separable(300, 10);
    let init = DeepModel::init(12, &[8], 6, 3).unwrap();
    let cfg = RoundConfig { max_rounds: 10, patience: 5, iterations_per_map: 5, batch_size: 20, seed: 5, ..Default::default() };
    let scripted = |round: usize, _: &DeepModel| Ok(Validation { loss: None, error: Some(script[round]) });
    let mut log = Vec::new();
    let result = train_with_validator(&data, init.clone(), &cfg, 3, scripted, Some(&mut log)).unwrap();
    let run = TrainRun::read_jsonl(log.as_slice()).unwrap();
    let replayed = run.replay_best_round(cfg.patience);
    let prefix = train_with_validator(
        &data,
        init,
        &RoundConfig { max_rounds: 5, ..cfg },
        3,
        |_, _| Ok(Validation { loss: None, error: None }),
        None,
    )
    .unwrap();
    let snapshot_ok = result.model.bit_eq(&prefix.final_model) && !result.model.bit_eq(&result.final_model);
    outcome(
        run.len() == 10 && replayed == Some(4) && result.best_round == Some(4) && snapshot_ok,
        format!(
            "{} rounds logged, replayed best round {replayed:?}, returned best round {:?}, model equals round-4 snapshot: {snapshot_ok}",
            run.len(),
            result.best_round
        ),
    )
}

fn main() {
    let parallel = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut trained = None;
    let mut results: Vec<(usize, &str, bool, Outcome)> = Vec::new();
    let mut record = |n: usize, title: &'static str, gating: bool, f: &mut dyn FnMut() -> Outcome| {
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        println!(
            "criterion {n:>2} {title}: {}{} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            if gating || o.pass { "" } else { " [not gating]" },
            o.detail
        );
        results.push((n, title, gating, o));
    };
    record(1, "gradient oracle", true, &mut gradient_oracle);
    record(2, "one-worker equivalence", true, &mut one_worker_equivalence);
    record(3, "averaging laws", true, &mut averaging_laws);
    record(4, "spectrogram oracle", true, &mut spectrogram_oracle);
    record(5, "end-to-end synthetic learning", true, &mut || end_to_end(&mut trained));
    record(6, "depth trend", false, &mut depth_trend);
    record(7, "speedup trend", parallel >= 4, &mut speedup);
    record(8, "confusion-matrix contract", true, &mut confusion_contract);
    record(9, "serialization round trips", true, &mut || serialization(trained.as_ref()));
    record(10, "early stopping", true, &mut early_stopping);

    let failed: Vec<usize> = results.iter().filter(|r| r.2 && !r.3.pass).map(|r| r.0).collect();
    let passed = results.iter().filter(|r| r.3.pass).count();
    println!("{passed}/{} criteria passed", results.len());
    if !failed.is_empty() {
        println!("gating failures: {failed:?}");
        std::process::exit(1);
    }
}
