//! The `shardnet` command-line tool: ingest, train, evaluate, benchmark and serve.

pub mod commands;
pub mod config;
pub mod server;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use shardnet_core::Error;

pub use config::{DataSource, RunConfig};

/// Exit code for usage and configuration errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for failures after work has started.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

/// Bad inputs are usage errors; numeric and engine failures are runtime aborts.
impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::File { .. } | Error::Format(_) | Error::Shape { .. } | Error::Label { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "shardnet", version, about = "Data-parallel deep activity recognition")]
pub struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for splitting, initialisation and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker count; `benchmark` takes a comma-separated list.
    #[arg(long, global = true, value_delimiter = ',')]
    pub workers: Option<Vec<usize>>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Frame and featurize samples into a dataset cache.
    Ingest(IngestArgs),
    /// Pretrain, train and save a model.
    Train(TrainArgs),
    /// Score a model on a dataset cache.
    Evaluate(EvaluateArgs),
    /// Time training across worker counts.
    Benchmark(BenchmarkArgs),
    /// Serve a model over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Actitracker raw CSV (plain or gzip).
    #[arg(long, conflicts_with = "synthetic")]
    pub csv: Option<PathBuf>,
    /// Generate the synthetic dataset instead.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub step: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Cold-start supervised training only.
    #[arg(long)]
    pub skip_pretrain: bool,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub run_log: Option<PathBuf>,
    #[arg(long)]
    pub test_cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset cache; defaults to the test cache written by `train`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also write the normalized confusion matrix here.
    #[arg(long)]
    pub confusion_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(w) = &self.workers {
            match (&self.command, w.as_slice()) {
                (Command::Benchmark(_), _) => cfg.bench_workers = w.clone(),
                (_, [n]) => cfg.workers = *n,
                _ => return Err(CliError::Usage("--workers takes a single count for this command".into())),
            }
        }
        match &self.command {
            Command::Ingest(a) => {
                if let Some(p) = &a.csv {
                    cfg.source = Some(DataSource::Csv(p.clone()));
                } else if a.synthetic {
                    cfg.source = Some(DataSource::Synthetic);
                }
                cfg.window_len = a.window_len.unwrap_or(cfg.window_len);
                cfg.step = a.step.unwrap_or(cfg.step);
            }
            Command::Train(a) => {
                cfg.skip_pretrain |= a.skip_pretrain;
                cfg.rounds.max_rounds = a.max_rounds.unwrap_or(cfg.rounds.max_rounds);
                cfg.model_path = a.model.clone().unwrap_or(cfg.model_path);
                cfg.run_log_path = a.run_log.clone().unwrap_or(cfg.run_log_path);
                cfg.test_cache_path = a.test_cache.clone().unwrap_or(cfg.test_cache_path);
            }
            Command::Evaluate(a) => {
                cfg.model_path = a.model.clone().unwrap_or(cfg.model_path);
                cfg.test_cache_path = a.data.clone().unwrap_or(cfg.test_cache_path);
            }
            Command::Benchmark(a) => {
                cfg.bench_repetitions = a.repetitions.unwrap_or(cfg.bench_repetitions);
                cfg.bench_rounds = a.rounds.unwrap_or(cfg.bench_rounds);
                cfg.report_path = a.report.clone().unwrap_or(cfg.report_path);
            }
            Command::Serve(a) => cfg.model_path = a.model.clone().unwrap_or(cfg.model_path),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs one parsed invocation, writing normal output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = cli.resolve_config()?;
    if cli.print_config {
        write!(out, "{}", cfg.to_text())?;
        return Ok(());
    }
    match &cli.command {
        Command::Ingest(a) => commands::ingest(&cfg, &a.out, out),
        Command::Train(_) => commands::train(&cfg, out).map(|_| ()),
        Command::Evaluate(a) => commands::evaluate(&cfg, a.confusion_csv.as_deref(), out).map(|_| ()),
        Command::Benchmark(_) => commands::benchmark(&cfg, out).map(|_| ()),
        Command::Serve(a) => server::serve(&cfg.model_path, &a.bind, out),
    }
}

/// Parses `args` and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}
