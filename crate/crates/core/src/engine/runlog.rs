//! Round telemetry.
//!
//! The run log holds one JSON object per line, one line per completed round:
//!
//! ```text
//! {"round":0,"wall_ms":12.5,"shard_losses":[0.61,0.58],"val_loss":0.42,"val_error":0.08}
//! ```
//!
//! `wall_ms` covers the Map and Reduce phases only. `val_loss` and
//! `val_error` are `null` when the run has no validation data (pretraining
//! rounds report reconstruction loss in `val_loss` and `null` error).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EarlyStopMonitor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub wall_ms: f64,
    pub shard_losses: Vec<f64>,
    pub val_loss: Option<f64>,
    pub val_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainRun {
    pub rounds: Vec<RoundRecord>,
}

impl TrainRun {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Map+Reduce wall time summed over all rounds, in seconds.
    pub fn loop_seconds(&self) -> f64 {
        self.rounds.iter().map(|r| r.wall_ms).sum::<f64>() / 1000.0
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.rounds {
            write_record(&mut w, r)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<TrainRun> {
        let mut rounds = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RoundRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("run log line {}: {e}", i + 1)))?;
            if rec.round != rounds.len() {
                return Err(Error::Format(format!(
                    "run log rounds not contiguous: expected {}, found {}",
                    rounds.len(),
                    rec.round
                )));
            }
            rounds.push(rec);
        }
        Ok(TrainRun { rounds })
    }

    /// Replays the validation errors through an early-stopping monitor and
    /// returns the round whose snapshot the trainer keeps.
    pub fn replay_best_round(&self, patience: usize) -> Option<usize> {
        let mut monitor = EarlyStopMonitor::new(patience);
        for r in &self.rounds {
            if let Some(err) = r.val_error {
                monitor.update(r.round, err);
            }
        }
        monitor.best_round()
    }
}

pub(crate) fn write_record<W: Write + ?Sized>(w: &mut W, r: &RoundRecord) -> Result<()> {
    let line = serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(w, "{line}")?;
    w.flush()?;
    Ok(())
}
