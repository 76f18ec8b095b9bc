//! Wall-clock speedup over worker counts.

use std::fmt::Write as _;

use crate::data::LabeledData;
use crate::engine::{partition_rows, train_with_validator, MapSchedule, RoundConfig, Validation};
use crate::error::{Error, Result};
use crate::nn::DeepModel;

/// One training job, identical across every worker count.
#[derive(Debug, Clone)]
pub struct SpeedupJob {
    pub train: LabeledData,
    pub init: DeepModel,
    /// Early stopping is not applied; every run executes `max_rounds` rounds.
    pub cfg: RoundConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupEntry {
    pub worker_count: usize,
    /// Median Map+Reduce time over the repetitions.
    pub wall_seconds: f64,
    pub samples: Vec<f64>,
    /// `T_base / T_M`.
    pub speedup: f64,
    /// SGD steps summed over all workers and rounds.
    pub total_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupReport {
    pub base_worker_count: usize,
    pub repetitions: usize,
    pub available_parallelism: usize,
    pub entries: Vec<SpeedupEntry>,
    pub warnings: Vec<String>,
}

impl SpeedupReport {
    pub fn entry(&self, worker_count: usize) -> Option<&SpeedupEntry> {
        self.entries.iter().find(|e| e.worker_count == worker_count)
    }

    /// Whether median time never rises as the worker count grows.
    pub fn is_monotone(&self) -> bool {
        let mut sorted: Vec<&SpeedupEntry> = self.entries.iter().collect();
        sorted.sort_by_key(|e| e.worker_count);
        sorted.windows(2).all(|p| p[1].wall_seconds <= p[0].wall_seconds)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("worker_count,median_wall_s,speedup\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{:.6},{:.6}", e.worker_count, e.wall_seconds, e.speedup);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "base: {} worker(s) (T_{}), repetitions: {}, available parallelism: {}",
            self.base_worker_count, self.base_worker_count, self.repetitions, self.available_parallelism
        );
        let _ = writeln!(out, "{:>8}  {:>14}  {:>8}  {:>12}", "workers", "median wall s", "speedup", "total steps");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{:>8}  {:>14.4}  {:>8.3}  {:>12}",
                e.worker_count, e.wall_seconds, e.speedup, e.total_steps
            );
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn total_steps(job: &SpeedupJob, workers: usize) -> Result<usize> {
    let per_round = match job.cfg.schedule {
        MapSchedule::FixedIterations => workers * job.cfg.iterations_per_map,
        MapSchedule::FullPass => partition_rows(Some(&job.train.labels), job.train.len(), workers, job.cfg.seed)?
            .iter()
            .map(|s| s.len().div_ceil(job.cfg.batch_size))
            .sum(),
    };
    Ok(per_round * job.cfg.max_rounds)
}

/// Runs the job once per repetition for every worker count, one
/// configuration at a time. The first count is the base.
pub fn benchmark_speedup(job: &SpeedupJob, worker_counts: &[usize], repetitions: usize) -> Result<SpeedupReport> {
    let base = *worker_counts
        .first()
        .ok_or_else(|| Error::Config("worker_counts must not be empty".into()))?;
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    if worker_counts.contains(&0) {
        return Err(Error::Config("worker counts must be positive".into()));
    }
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut warnings = Vec::new();
    let mut entries = Vec::with_capacity(worker_counts.len());
    for &workers in worker_counts {
        if workers > available {
            warnings.push(format!(
                "{workers} workers exceed the {available} available hardware thread(s); timings for this row are not a parallel measurement"
            ));
        }
        let mut samples = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let out = train_with_validator(
                &job.train,
                job.init.clone(),
                &job.cfg,
                workers,
                |_, _| Ok(Validation { loss: None, error: None }),
                None,
            )?;
            samples.push(out.run.loop_seconds());
        }
        let wall_seconds = median(&samples);
        if !(wall_seconds > 0.0) {
            return Err(Error::Config(format!("measured a zero wall time for {workers} workers")));
        }
        entries.push(SpeedupEntry {
            worker_count: workers,
            wall_seconds,
            samples,
            speedup: 0.0,
            total_steps: total_steps(job, workers)?,
        });
    }
    let t_base = entries[0].wall_seconds;
    for e in &mut entries {
        e.speedup = if e.worker_count == base { 1.0 } else { t_base / e.wall_seconds };
    }
    if job.cfg.schedule == MapSchedule::FixedIterations && worker_counts.len() > 1 {
        warnings.push("fixed-iteration Map tasks: total work grows with the worker count (see total steps)".into());
    }
    Ok(SpeedupReport {
        base_worker_count: base,
        repetitions,
        available_parallelism: available,
        entries,
        warnings,
    })
}
