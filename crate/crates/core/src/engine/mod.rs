//! Iterative Map/Reduce training.
//!
//! Each round the master publishes an immutable snapshot of its parameters.
//! Every worker trains a partial model from that snapshot on its own shard
//! (Map), the master waits for all of them, averages their parameters in a
//! fixed order (Reduce), validates the result and starts the next round.
//! Workers are scoped threads that share nothing mutable.

mod runlog;
mod schedule;

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use runlog::{RoundRecord, TrainRun};
pub use schedule::{map_batches, BatchSampler, MapSchedule};

use crate::data::{holdout, LabeledData};
use crate::error::{Error, Result};
use crate::eval::{predict_chunked, EarlyStopMonitor, StopDecision};
use crate::nn::{DeepModel, LossKind, Matrix, Parameters, Targets};
use crate::pretrain::{denoising_step, AutoencoderLayer, PretrainConfig};
use crate::rng::{self, derive_seed};

const PARTITION_TAG: u64 = 0x7061_7274;

/// An immutable slice of the training data owned by one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShard {
    pub shard_id: usize,
    pub features: Matrix,
    /// `None` for unlabeled (pretraining) shards.
    pub labels: Option<Vec<usize>>,
    /// Row indices into the partitioned dataset, ascending.
    pub source_rows: Vec<usize>,
}

impl DataShard {
    pub fn sample_count(&self) -> usize {
        self.features.rows()
    }
}

/// Assigns rows to shards: rows are grouped by label (one group when
/// unlabeled), each group is shuffled and dealt round-robin with the dealer
/// position carried across groups. Each shard keeps its rows in source order.
pub fn partition_rows(labels: Option<&[usize]>, n_rows: usize, n_shards: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_shards == 0 {
        return Err(Error::Config("n_shards must be at least 1".into()));
    }
    if n_shards > n_rows {
        return Err(Error::Config(format!("cannot split {n_rows} rows into {n_shards} non-empty shards")));
    }
    let mut groups: Vec<Vec<usize>> = match labels {
        Some(labels) => {
            let n_labels = labels.iter().max().map_or(0, |m| m + 1);
            let mut g = vec![Vec::new(); n_labels];
            for (i, &l) in labels.iter().enumerate().take(n_rows) {
                g[l].push(i);
            }
            g
        }
        None => vec![(0..n_rows).collect()],
    };
    let mut rng = rng::seeded(derive_seed(seed, &[PARTITION_TAG]));
    let mut shards = vec![Vec::new(); n_shards];
    let mut dealer = 0;
    for group in &mut groups {
        rand::seq::SliceRandom::shuffle(group.as_mut_slice(), &mut rng);
        for &row in group.iter() {
            shards[dealer].push(row);
            dealer = (dealer + 1) % n_shards;
        }
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(shards)
}

pub fn partition(data: &LabeledData, n_shards: usize, seed: u64) -> Result<Vec<DataShard>> {
    let rows = partition_rows(Some(&data.labels), data.len(), n_shards, seed)?;
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(shard_id, idx)| DataShard {
            shard_id,
            features: data.features.select_rows(&idx),
            labels: Some(idx.iter().map(|&i| data.labels[i]).collect()),
            source_rows: idx,
        })
        .collect())
}

pub fn partition_unlabeled(features: &Matrix, n_shards: usize, seed: u64) -> Result<Vec<DataShard>> {
    let rows = partition_rows(None, features.rows(), n_shards, seed)?;
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(shard_id, idx)| DataShard {
            shard_id,
            features: features.select_rows(&idx),
            labels: None,
            source_rows: idx,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    BySampleCount,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundConfig {
    pub batch_size: usize,
    pub iterations_per_map: usize,
    pub learning_rate: f32,
    pub max_rounds: usize,
    /// Rounds without validation improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub schedule: MapSchedule,
    pub weighting: Weighting,
    /// Share of the labeled training data kept at the master for early stopping.
    pub validation_fraction: f64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            batch_size: 100,
            iterations_per_map: 100,
            learning_rate: 0.5,
            max_rounds: 30,
            patience: 5,
            seed: 0,
            schedule: MapSchedule::FixedIterations,
            weighting: Weighting::Uniform,
            validation_fraction: 0.1,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    fn plan(&self) -> MapPlan {
        MapPlan {
            batch_size: self.batch_size,
            iterations: self.iterations_per_map,
            schedule: self.schedule,
        }
    }
}

/// The master's parameters as published for one round.
#[derive(Debug, Clone)]
pub struct MasterSnapshot<P> {
    pub round: usize,
    pub params: Arc<P>,
}

/// What a worker sends back after its Map task.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialModel<P> {
    pub round: usize,
    pub shard_id: usize,
    pub trained_on: usize,
    pub mean_loss: f64,
    pub params: P,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MapPlan {
    pub batch_size: usize,
    pub iterations: usize,
    pub schedule: MapSchedule,
}

/// One SGD step of a Map task.
pub(crate) trait ShardObjective<P>: Sync {
    fn step(&self, params: &mut P, shard: &DataShard, batch: &[usize], rng: &mut ChaCha8Rng) -> Result<f64>;
}

pub(crate) struct Supervised {
    pub learning_rate: f32,
}

impl ShardObjective<DeepModel> for Supervised {
    fn step(&self, model: &mut DeepModel, shard: &DataShard, batch: &[usize], _rng: &mut ChaCha8Rng) -> Result<f64> {
        let labels = shard
            .labels
            .as_ref()
            .ok_or_else(|| Error::Config("supervised training needs a labeled shard".into()))?;
        let x = shard.features.select_rows(batch);
        let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        let (loss, grads) = model.backprop_with_loss(&x, Targets::Labels(&y), LossKind::SoftmaxCrossEntropy)?;
        model.sgd_step(&grads, self.learning_rate)?;
        Ok(loss)
    }
}

pub(crate) struct Denoising {
    pub cfg: PretrainConfig,
}

impl ShardObjective<AutoencoderLayer> for Denoising {
    fn step(
        &self,
        layer: &mut AutoencoderLayer,
        shard: &DataShard,
        batch: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        denoising_step(layer, &shard.features.select_rows(batch), &self.cfg, rng)
    }
}

fn run_map<P: Parameters, O: ShardObjective<P>>(
    objective: &O,
    shard: &DataShard,
    master: &MasterSnapshot<P>,
    plan: MapPlan,
    seed: u64,
) -> Result<PartialModel<P>> {
    let mut params = (*master.params).clone();
    let mut rng = rng::stream_rng(seed, master.round, shard.shard_id);
    let batches = map_batches(shard.sample_count(), plan.batch_size, plan.iterations, plan.schedule, &mut rng);
    let mut total = 0.0;
    for (iteration, batch) in batches.iter().enumerate() {
        let loss = objective.step(&mut params, shard, batch, &mut rng).map_err(|e| Error::Worker {
            shard_id: shard.shard_id,
            round: master.round,
            source: Box::new(match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} at iteration {iteration}")),
                other => other,
            }),
        })?;
        if !loss.is_finite() {
            return Err(Error::Worker {
                shard_id: shard.shard_id,
                round: master.round,
                source: Box::new(Error::NonFinite(format!("loss at iteration {iteration}"))),
            });
        }
        total += loss;
    }
    Ok(PartialModel {
        round: master.round,
        shard_id: shard.shard_id,
        trained_on: shard.sample_count(),
        mean_loss: if batches.is_empty() { 0.0 } else { total / batches.len() as f64 },
        params,
    })
}

/// Supervised Map task: `iterations_per_map` SGD steps (or one pass) from
/// the master snapshot on this shard.
pub fn map_train(
    shard: &DataShard,
    master: &DeepModel,
    cfg: &RoundConfig,
    round: usize,
    worker_seed: u64,
) -> Result<PartialModel<DeepModel>> {
    cfg.validate()?;
    let snapshot = MasterSnapshot {
        round,
        params: Arc::new(master.clone()),
    };
    run_map(
        &Supervised {
            learning_rate: cfg.learning_rate,
        },
        shard,
        &snapshot,
        cfg.plan(),
        worker_seed,
    )
}

/// Elementwise weighted mean of the partial models.
///
/// Partials are ordered by shard id and summed as a pairwise tree in f64, so
/// the result does not depend on the order they arrived in.
pub fn reduce_average<P: Parameters>(partials: &[PartialModel<P>], weighting: Weighting) -> Result<P> {
    let first = partials
        .first()
        .ok_or_else(|| Error::Protocol("reduce over zero partial models".into()))?;
    let layout: Vec<usize> = first.params.tensors().iter().map(|t| t.len()).collect();
    for p in partials {
        if p.round != first.round {
            return Err(Error::Protocol(format!(
                "partial from shard {} belongs to round {}, expected {}",
                p.shard_id, p.round, first.round
            )));
        }
        let l: Vec<usize> = p.params.tensors().iter().map(|t| t.len()).collect();
        if l != layout {
            return Err(Error::Protocol(format!("partial from shard {} has a different shape", p.shard_id)));
        }
    }
    let mut ordered: Vec<&PartialModel<P>> = partials.iter().collect();
    ordered.sort_by_key(|p| p.shard_id);
    let weights: Vec<f64> = ordered
        .iter()
        .map(|p| match weighting {
            Weighting::Uniform => 1.0,
            Weighting::BySampleCount => p.trained_on as f64,
        })
        .collect();
    let total_weight = pairwise_sum(weights.iter().map(|&w| vec![w]).collect())[0];
    if !(total_weight > 0.0) {
        return Err(Error::Protocol("partial models carry zero total weight".into()));
    }
    let level: Vec<Vec<f64>> = ordered
        .iter()
        .zip(&weights)
        .map(|(p, &w)| {
            p.params
                .tensors()
                .iter()
                .flat_map(|t| t.iter().map(move |&v| v as f64 * w))
                .collect()
        })
        .collect();
    let sums = pairwise_sum(level);
    let mut out = first.params.clone();
    let mut it = sums.into_iter();
    for t in out.tensors_mut() {
        for v in t.iter_mut() {
            *v = (it.next().expect("layout checked") / total_weight) as f32;
        }
    }
    Ok(out)
}

fn pairwise_sum(mut level: Vec<Vec<f64>>) -> Vec<f64> {
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        level = next;
    }
    level.pop().unwrap_or_default()
}

/// Runs one Map phase over all shards on `n_workers` scoped threads and
/// returns once every worker has reported (the barrier). A failed task is
/// retried once with the same inputs.
fn map_phase<P: Parameters, O: ShardObjective<P>>(
    objective: &O,
    shards: &[DataShard],
    master: &MasterSnapshot<P>,
    plan: MapPlan,
    seed: u64,
    n_workers: usize,
) -> Result<Vec<PartialModel<P>>> {
    let n_workers = n_workers.clamp(1, shards.len().max(1));
    let task = |shard: &DataShard| {
        run_map(objective, shard, master, plan, seed).or_else(|first| {
            log::warn!("shard {} failed in round {}, retrying: {first}", shard.shard_id, master.round);
            run_map(objective, shard, master, plan, seed)
        })
    };
    let results: Vec<Result<PartialModel<P>>> = if n_workers == 1 {
        shards.iter().map(task).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..n_workers)
                .map(|w| {
                    let task = &task;
                    scope.spawn(move || {
                        shards
                            .iter()
                            .skip(w)
                            .step_by(n_workers)
                            .map(task)
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("worker thread panicked"))
                .collect()
        })
    };
    let mut partials = results.into_iter().collect::<Result<Vec<_>>>()?;
    partials.sort_by_key(|p| p.shard_id);
    Ok(partials)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub loss: Option<f64>,
    pub error: Option<f64>,
}

pub(crate) struct LoopSettings {
    pub plan: MapPlan,
    pub max_rounds: usize,
    /// `None` disables early stopping.
    pub patience: Option<usize>,
    pub weighting: Weighting,
    pub seed: u64,
    pub n_workers: usize,
}

pub(crate) struct LoopOutcome<P> {
    pub best: P,
    pub last: P,
    pub best_round: Option<usize>,
    pub run: TrainRun,
}

/// Broadcast, Map, barrier, Reduce, validate; repeated until `max_rounds`
/// or until validation error stops improving.
pub(crate) fn run_loop<P, O, V>(
    objective: &O,
    shards: &[DataShard],
    init: P,
    settings: &LoopSettings,
    mut validate: V,
    mut log: Option<&mut dyn Write>,
) -> Result<LoopOutcome<P>>
where
    P: Parameters,
    O: ShardObjective<P>,
    V: FnMut(usize, &P) -> Result<Validation>,
{
    let mut master = init;
    let mut best = master.clone();
    let mut monitor = settings.patience.map(EarlyStopMonitor::new);
    let mut run = TrainRun::default();
    for round in 0..settings.max_rounds {
        let snapshot = MasterSnapshot {
            round,
            params: Arc::new(master),
        };
        let started = Instant::now();
        let partials = map_phase(objective, shards, &snapshot, settings.plan, settings.seed, settings.n_workers)?;
        if let Some(stale) = partials.iter().find(|p| p.round != round) {
            return Err(Error::Protocol(format!(
                "round {round} received a partial tagged round {} from shard {}",
                stale.round, stale.shard_id
            )));
        }
        master = reduce_average(&partials, settings.weighting)?;
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        drop(snapshot);
        if !master.is_finite() {
            return Err(Error::NonFinite(format!("averaged parameters in round {round}")));
        }
        let v = validate(round, &master)?;
        let record = RoundRecord {
            round,
            wall_ms,
            shard_losses: partials.iter().map(|p| p.mean_loss).collect(),
            val_loss: v.loss,
            val_error: v.error,
        };
        if let Some(w) = log.as_deref_mut() {
            runlog::write_record(w, &record)?;
        }
        run.rounds.push(record);
        match (monitor.as_mut(), v.error) {
            (Some(m), Some(err)) => {
                let decision = m.update(round, err);
                if m.improved_at(round) {
                    best = master.clone();
                }
                if decision == StopDecision::Stop {
                    break;
                }
            }
            _ => best = master.clone(),
        }
    }
    Ok(LoopOutcome {
        best_round: match &monitor {
            Some(m) if run.rounds.iter().any(|r| r.val_error.is_some()) => m.best_round(),
            _ => run.len().checked_sub(1),
        },
        best,
        last: master,
        run,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    /// Snapshot from the best validation round.
    pub model: DeepModel,
    /// Master after the last executed round.
    pub final_model: DeepModel,
    pub best_round: Option<usize>,
    pub run: TrainRun,
}

/// Validation error and mean cross-entropy of `model` on `val`.
pub fn validate_model(model: &DeepModel, val: &LabeledData) -> Result<Validation> {
    if val.is_empty() {
        return Ok(Validation { loss: None, error: None });
    }
    let predicted = predict_chunked(model, val)?;
    let wrong = predicted.iter().zip(&val.labels).filter(|(p, t)| p != t).count();
    let loss = model.loss(&val.features, Targets::Labels(&val.labels), LossKind::SoftmaxCrossEntropy)?;
    Ok(Validation {
        loss: Some(loss),
        error: Some(wrong as f64 / val.len() as f64),
    })
}

/// Distributed supervised training. A `validation_fraction` share of `train`
/// stays at the master for early stopping; the rest is sharded across
/// `n_workers` workers.
pub fn train_distributed(train: &LabeledData, init: DeepModel, cfg: &RoundConfig, n_workers: usize) -> Result<TrainResult> {
    train_distributed_logged(train, init, cfg, n_workers, None)
}

pub fn train_distributed_logged(
    train: &LabeledData,
    init: DeepModel,
    cfg: &RoundConfig,
    n_workers: usize,
    log: Option<&mut dyn Write>,
) -> Result<TrainResult> {
    cfg.validate()?;
    let (fit, val) = holdout(train, cfg.validation_fraction, cfg.seed)?;
    train_with_validator(&fit, init, cfg, n_workers, |_, m| validate_model(m, &val), log)
}

/// Distributed supervised training on `fit` with a caller-supplied
/// validation metric per round.
pub fn train_with_validator<V>(
    fit: &LabeledData,
    init: DeepModel,
    cfg: &RoundConfig,
    n_workers: usize,
    validate: V,
    log: Option<&mut dyn Write>,
) -> Result<TrainResult>
where
    V: FnMut(usize, &DeepModel) -> Result<Validation>,
{
    cfg.validate()?;
    if n_workers == 0 {
        return Err(Error::Config("n_workers must be at least 1".into()));
    }
    if let Some(&bad) = fit.labels.iter().find(|&&l| l >= init.label_count()) {
        return Err(Error::Label {
            label: bad,
            label_count: init.label_count(),
        });
    }
    if fit.features.cols() != init.input_dim() {
        return Err(Error::shape("training features", init.input_dim(), fit.features.cols()));
    }
    if cfg.max_rounds == 0 {
        return Ok(TrainResult {
            model: init.clone(),
            final_model: init,
            best_round: None,
            run: TrainRun::default(),
        });
    }
    let shards = partition(fit, n_workers, cfg.seed)?;
    let settings = LoopSettings {
        plan: cfg.plan(),
        max_rounds: cfg.max_rounds,
        patience: Some(cfg.patience),
        weighting: cfg.weighting,
        seed: cfg.seed,
        n_workers,
    };
    let out = run_loop(
        &Supervised {
            learning_rate: cfg.learning_rate,
        },
        &shards,
        init,
        &settings,
        validate,
        log,
    )?;
    Ok(TrainResult {
        model: out.best,
        final_model: out.last,
        best_round: out.best_round,
        run: out.run,
    })
}

/// Single-process reference trainer running the same batch schedule as one
/// worker of `train_with_validator`: per round, the batches drawn from
/// `stream_rng(seed, round, 0)` over `fit` in row order.
pub fn train_sequential(fit: &LabeledData, val: &LabeledData, init: DeepModel, cfg: &RoundConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let mut model = init;
    let mut best = model.clone();
    let mut monitor = EarlyStopMonitor::new(cfg.patience);
    let mut run = TrainRun::default();
    for round in 0..cfg.max_rounds {
        let started = Instant::now();
        let mut rng = rng::stream_rng(cfg.seed, round, 0);
        let batches = map_batches(fit.len(), cfg.batch_size, cfg.iterations_per_map, cfg.schedule, &mut rng);
        let mut total = 0.0;
        for batch in &batches {
            let x = fit.features.select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&i| fit.labels[i]).collect();
            let (loss, grads) = model.backprop_with_loss(&x, Targets::Labels(&y), LossKind::SoftmaxCrossEntropy)?;
            model.sgd_step(&grads, cfg.learning_rate)?;
            total += loss;
        }
        let v = validate_model(&model, val)?;
        run.rounds.push(RoundRecord {
            round,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            shard_losses: vec![total / batches.len().max(1) as f64],
            val_loss: v.loss,
            val_error: v.error,
        });
        match v.error {
            Some(err) => {
                let decision = monitor.update(round, err);
                if monitor.improved_at(round) {
                    best = model.clone();
                }
                if decision == StopDecision::Stop {
                    break;
                }
            }
            None => best = model.clone(),
        }
    }
    let best_round = if val.is_empty() { run.len().checked_sub(1) } else { monitor.best_round() };
    Ok(TrainResult {
        model: best,
        final_model: model,
        best_round,
        run,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainRun {
    pub layers: Vec<AutoencoderLayer>,
    /// One run per layer; `val_loss` is the held-out reconstruction loss.
    pub runs: Vec<TrainRun>,
}

/// Greedy layer-wise pretraining under the Map/Reduce loop. Shards are cut
/// once; before each new layer every worker encodes its own shard with the
/// layers trained so far. Each round is one pass over each shard (one epoch),
/// and `cfg.epochs` rounds are run per layer.
pub fn pretrain_distributed(
    unlabeled: &Matrix,
    heldout: Option<&Matrix>,
    layer_dims: &[usize],
    cfg: &PretrainConfig,
    n_workers: usize,
    weighting: Weighting,
) -> Result<PretrainRun> {
    cfg.validate()?;
    if layer_dims.is_empty() || layer_dims.contains(&0) {
        return Err(Error::Config("layer_dims must be non-empty and positive".into()));
    }
    if n_workers == 0 {
        return Err(Error::Config("n_workers must be at least 1".into()));
    }
    let mut shards = partition_unlabeled(unlabeled, n_workers, cfg.seed)?;
    let mut heldout = heldout.cloned();
    let mut layers = Vec::with_capacity(layer_dims.len());
    let mut runs = Vec::with_capacity(layer_dims.len());
    for (index, &d_hidden) in layer_dims.iter().enumerate() {
        let lcfg = cfg.for_layer(index);
        let d_in = shards[0].features.cols();
        let settings = LoopSettings {
            plan: MapPlan {
                batch_size: lcfg.batch_size,
                iterations: 0,
                schedule: MapSchedule::FullPass,
            },
            max_rounds: lcfg.epochs,
            patience: None,
            weighting,
            seed: lcfg.seed,
            n_workers,
        };
        let held = heldout.as_ref();
        let out = run_loop(
            &Denoising { cfg: lcfg },
            &shards,
            AutoencoderLayer::seeded(d_in, d_hidden, lcfg.seed),
            &settings,
            |_, layer: &AutoencoderLayer| {
                Ok(Validation {
                    loss: held.map(|h| layer.reconstruction_loss(h)).transpose()?,
                    error: None,
                })
            },
            None,
        )?;
        let layer = out.last;
        if index + 1 < layer_dims.len() {
            for shard in &mut shards {
                shard.features = layer.encode(&shard.features)?;
            }
            heldout = heldout.map(|h| layer.encode(&h)).transpose()?;
        }
        layers.push(layer);
        runs.push(out.run);
    }
    Ok(PretrainRun { layers, runs })
}
