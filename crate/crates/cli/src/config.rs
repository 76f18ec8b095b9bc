//! Run configuration: a flat `key = value` file with `[section]` headers.
//!
//! ```text
//! # comment
//! [data]
//! source = synthetic
//! [model]
//! layer_dims = 128,128
//! ```
//! Keys are addressed as `section.key`. Unknown sections and keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use shardnet_core::engine::{MapSchedule, RoundConfig, Weighting};
use shardnet_core::pretrain::PretrainConfig;

use crate::CliError;

/// Where samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: Option<DataSource>,
    pub window_len: usize,
    pub step: usize,
    pub test_fraction: f64,
    pub split_by_user: bool,
    pub synth_per_class: usize,
    pub synth_noise: f32,
    pub synth_users: u32,

    pub layer_dims: Vec<usize>,

    pub skip_pretrain: bool,
    pub pretrain: PretrainConfig,

    pub rounds: RoundConfig,

    pub workers: usize,

    pub model_path: PathBuf,
    pub run_log_path: PathBuf,
    pub test_cache_path: PathBuf,
    pub report_path: PathBuf,

    pub bench_workers: Vec<usize>,
    pub bench_repetitions: usize,
    pub bench_rounds: usize,
    pub bench_layer_dims: Vec<usize>,
    pub bench_schedule: MapSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            source: None,
            window_len: 200,
            step: 100,
            test_fraction: 0.2,
            split_by_user: true,
            synth_per_class: 500,
            synth_noise: 0.1,
            synth_users: 6,
            layer_dims: vec![128, 128],
            skip_pretrain: false,
            pretrain: PretrainConfig::default(),
            rounds: RoundConfig::default(),
            workers: 4,
            model_path: "model.shardnet".into(),
            run_log_path: "run_log.jsonl".into(),
            test_cache_path: "test.shardset".into(),
            report_path: "speedup.csv".into(),
            bench_workers: vec![1, 2, 4],
            bench_repetitions: 3,
            bench_rounds: 10,
            bench_layer_dims: vec![256, 256, 256],
            bench_schedule: MapSchedule::FullPass,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn list(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn schedule_name(s: MapSchedule) -> &'static str {
    match s {
        MapSchedule::FixedIterations => "fixed",
        MapSchedule::FullPass => "full_pass",
    }
}

fn parse_schedule(key: &str, value: &str) -> Result<MapSchedule, CliError> {
    match value {
        "fixed" => Ok(MapSchedule::FixedIterations),
        "full_pass" => Ok(MapSchedule::FullPass),
        _ => Err(CliError::Usage(format!("{key}: expected fixed or full_pass, got {value:?}"))),
    }
}

impl RunConfig {
    /// Reads `path` over the defaults.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)
            .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", n + 1)))?;
            if section.is_empty() {
                return Err(CliError::Usage(format!("line {}: key outside a section", n + 1)));
            }
            self.set(&format!("{section}.{}", k.trim()), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "data.source" => {
                self.source = Some(match value {
                    "synthetic" => DataSource::Synthetic,
                    path => DataSource::Csv(path.into()),
                })
            }
            "data.window_len" => self.window_len = parse(key, value)?,
            "data.step" => self.step = parse(key, value)?,
            "data.test_fraction" => self.test_fraction = parse(key, value)?,
            "data.split_by_user" => self.split_by_user = parse(key, value)?,
            "data.synth_per_class" => self.synth_per_class = parse(key, value)?,
            "data.synth_noise" => self.synth_noise = parse(key, value)?,
            "data.synth_users" => self.synth_users = parse(key, value)?,
            "model.layer_dims" => self.layer_dims = parse_list(key, value)?,
            "pretrain.skip" => self.skip_pretrain = parse(key, value)?,
            "pretrain.epochs" => self.pretrain.epochs = parse(key, value)?,
            "pretrain.learning_rate" => self.pretrain.learning_rate = parse(key, value)?,
            "pretrain.batch_size" => self.pretrain.batch_size = parse(key, value)?,
            "pretrain.corruption_prob" => self.pretrain.corruption_prob = parse(key, value)?,
            "train.max_rounds" => self.rounds.max_rounds = parse(key, value)?,
            "train.patience" => self.rounds.patience = parse(key, value)?,
            "train.learning_rate" => self.rounds.learning_rate = parse(key, value)?,
            "train.batch_size" => self.rounds.batch_size = parse(key, value)?,
            "train.iterations_per_map" => self.rounds.iterations_per_map = parse(key, value)?,
            "train.validation_fraction" => self.rounds.validation_fraction = parse(key, value)?,
            "train.schedule" => self.rounds.schedule = parse_schedule(key, value)?,
            "train.weighting" => {
                self.rounds.weighting = match value {
                    "uniform" => Weighting::Uniform,
                    "by_sample_count" => Weighting::BySampleCount,
                    _ => {
                        return Err(CliError::Usage(format!(
                            "{key}: expected uniform or by_sample_count, got {value:?}"
                        )))
                    }
                }
            }
            "run.seed" => self.set_seed(parse(key, value)?),
            "run.workers" => self.workers = parse(key, value)?,
            "output.model" => self.model_path = value.into(),
            "output.run_log" => self.run_log_path = value.into(),
            "output.test_cache" => self.test_cache_path = value.into(),
            "output.report" => self.report_path = value.into(),
            "benchmark.workers" => self.bench_workers = parse_list(key, value)?,
            "benchmark.repetitions" => self.bench_repetitions = parse(key, value)?,
            "benchmark.rounds" => self.bench_rounds = parse(key, value)?,
            "benchmark.layer_dims" => self.bench_layer_dims = parse_list(key, value)?,
            "benchmark.schedule" => self.bench_schedule = parse_schedule(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key {key}"))),
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.rounds.seed
    }

    /// One seed drives splitting, initialisation, pretraining and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.rounds.seed = seed;
        self.pretrain.seed = seed;
    }

    /// Checks every value; errors name the offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, why: &str| Err(CliError::Usage(format!("{key}: {why}")));
        if self.window_len < 2 {
            return bad("data.window_len", "must be at least 2");
        }
        if self.step == 0 {
            return bad("data.step", "must be positive");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("data.test_fraction", "must lie in (0, 1)");
        }
        if self.synth_per_class == 0 {
            return bad("data.synth_per_class", "must be positive");
        }
        if !(self.synth_noise >= 0.0 && self.synth_noise.is_finite()) {
            return bad("data.synth_noise", "must be finite and non-negative");
        }
        if self.synth_users == 0 {
            return bad("data.synth_users", "must be positive");
        }
        if self.layer_dims.is_empty() || self.layer_dims.contains(&0) {
            return bad("model.layer_dims", "must list positive widths");
        }
        if self.pretrain.epochs == 0 && !self.skip_pretrain {
            return bad("pretrain.epochs", "must be positive unless pretrain.skip is set");
        }
        if !(self.pretrain.learning_rate > 0.0 && self.pretrain.learning_rate.is_finite()) {
            return bad("pretrain.learning_rate", "must be positive");
        }
        if self.pretrain.batch_size == 0 {
            return bad("pretrain.batch_size", "must be positive");
        }
        if !(0.0..1.0).contains(&self.pretrain.corruption_prob) {
            return bad("pretrain.corruption_prob", "must lie in [0, 1)");
        }
        if !(self.rounds.learning_rate > 0.0 && self.rounds.learning_rate.is_finite()) {
            return bad("train.learning_rate", "must be positive");
        }
        if self.rounds.batch_size == 0 {
            return bad("train.batch_size", "must be positive");
        }
        if !(0.0..1.0).contains(&self.rounds.validation_fraction) {
            return bad("train.validation_fraction", "must lie in [0, 1)");
        }
        if self.workers == 0 {
            return bad("run.workers", "must be positive");
        }
        if self.bench_workers.is_empty() || self.bench_workers.contains(&0) {
            return bad("benchmark.workers", "must list positive worker counts");
        }
        if self.bench_repetitions == 0 {
            return bad("benchmark.repetitions", "must be positive");
        }
        if self.bench_layer_dims.is_empty() || self.bench_layer_dims.contains(&0) {
            return bad("benchmark.layer_dims", "must list positive widths");
        }
        Ok(())
    }

    /// The fully resolved configuration in the file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let source = match &self.source {
            Some(DataSource::Synthetic) => "synthetic".to_string(),
            Some(DataSource::Csv(p)) => p.display().to_string(),
            None => String::new(),
        };
        let weighting = match self.rounds.weighting {
            Weighting::Uniform => "uniform",
            Weighting::BySampleCount => "by_sample_count",
        };
        let _ = writeln!(s, "[data]");
        if source.is_empty() {
            let _ = writeln!(s, "# source = <csv path> | synthetic   (required)");
        } else {
            let _ = writeln!(s, "source = {source}");
        }
        let _ = writeln!(s, "window_len = {}", self.window_len);
        let _ = writeln!(s, "step = {}", self.step);
        let _ = writeln!(s, "test_fraction = {}", self.test_fraction);
        let _ = writeln!(s, "split_by_user = {}", self.split_by_user);
        let _ = writeln!(s, "synth_per_class = {}", self.synth_per_class);
        let _ = writeln!(s, "synth_noise = {}", self.synth_noise);
        let _ = writeln!(s, "synth_users = {}", self.synth_users);
        let _ = writeln!(s, "\n[model]\nlayer_dims = {}", list(&self.layer_dims));
        let _ = writeln!(s, "\n[pretrain]");
        let _ = writeln!(s, "skip = {}", self.skip_pretrain);
        let _ = writeln!(s, "epochs = {}", self.pretrain.epochs);
        let _ = writeln!(s, "learning_rate = {}", self.pretrain.learning_rate);
        let _ = writeln!(s, "batch_size = {}", self.pretrain.batch_size);
        let _ = writeln!(s, "corruption_prob = {}", self.pretrain.corruption_prob);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "max_rounds = {}", self.rounds.max_rounds);
        let _ = writeln!(s, "patience = {}", self.rounds.patience);
        let _ = writeln!(s, "learning_rate = {}", self.rounds.learning_rate);
        let _ = writeln!(s, "batch_size = {}", self.rounds.batch_size);
        let _ = writeln!(s, "iterations_per_map = {}", self.rounds.iterations_per_map);
        let _ = writeln!(s, "validation_fraction = {}", self.rounds.validation_fraction);
        let _ = writeln!(s, "schedule = {}", schedule_name(self.rounds.schedule));
        let _ = writeln!(s, "weighting = {weighting}");
        let _ = writeln!(s, "\n[run]\nseed = {}\nworkers = {}", self.seed(), self.workers);
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "model = {}", self.model_path.display());
        let _ = writeln!(s, "run_log = {}", self.run_log_path.display());
        let _ = writeln!(s, "test_cache = {}", self.test_cache_path.display());
        let _ = writeln!(s, "report = {}", self.report_path.display());
        let _ = writeln!(s, "\n[benchmark]");
        let _ = writeln!(s, "workers = {}", list(&self.bench_workers));
        let _ = writeln!(s, "repetitions = {}", self.bench_repetitions);
        let _ = writeln!(s, "rounds = {}", self.bench_rounds);
        let _ = writeln!(s, "layer_dims = {}", list(&self.bench_layer_dims));
        let _ = writeln!(s, "schedule = {}", schedule_name(self.bench_schedule));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_config_parses_back() {
        let mut cfg = RunConfig {
            source: Some(DataSource::Csv("raw.txt".into())),
            layer_dims: vec![64, 32],
            ..Default::default()
        };
        cfg.set_seed(17);
        cfg.rounds.schedule = MapSchedule::FullPass;
        cfg.rounds.weighting = Weighting::BySampleCount;
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::default();
        let e = cfg.apply_text("[train]\nmax_round = 3\n").unwrap_err();
        assert!(e.to_string().contains("train.max_round"));
        assert!(cfg.apply_text("[nope]\nx = 1\n").is_err());
        assert!(cfg.apply_text("x = 1\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# top\n\n[data]\nsource = synthetic  # inline\n[run]\nworkers=2\n").unwrap();
        assert_eq!(cfg.source, Some(DataSource::Synthetic));
        assert_eq!(cfg.workers, 2);
    }

    #[test]
    fn validation_names_the_field() {
        let cfg = RunConfig {
            layer_dims: vec![],
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("model.layer_dims"));
        let mut cfg = RunConfig::default();
        cfg.rounds.learning_rate = -1.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("train.learning_rate"));
    }
}
