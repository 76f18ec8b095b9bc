/// Absolute margin a metric must beat the best by to count as an improvement.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Tracks the best (lowest) validation metric over strictly increasing rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopMonitor {
    best_metric: f64,
    best_round: Option<usize>,
    patience: usize,
    rounds_since_improvement: usize,
    last_round: Option<usize>,
}

impl EarlyStopMonitor {
    pub fn new(patience: usize) -> Self {
        EarlyStopMonitor {
            best_metric: f64::INFINITY,
            best_round: None,
            patience,
            rounds_since_improvement: 0,
            last_round: None,
        }
    }

    pub fn best_metric(&self) -> f64 {
        self.best_metric
    }

    pub fn best_round(&self) -> Option<usize> {
        self.best_round
    }

    pub fn patience(&self) -> usize {
        self.patience
    }

    pub fn rounds_since_improvement(&self) -> usize {
        self.rounds_since_improvement
    }

    /// Records `metric` for `round`. Stops once more than `patience` rounds
    /// have passed without beating the best by `IMPROVEMENT_TOLERANCE`.
    pub fn update(&mut self, round: usize, metric: f64) -> StopDecision {
        assert!(
            self.last_round.is_none_or(|last| round > last),
            "rounds must be strictly increasing"
        );
        self.last_round = Some(round);
        if metric < self.best_metric - IMPROVEMENT_TOLERANCE {
            self.best_metric = metric;
            self.best_round = Some(round);
            self.rounds_since_improvement = 0;
        } else {
            self.rounds_since_improvement += 1;
        }
        if self.rounds_since_improvement > self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    /// Whether the last `update` set a new best.
    pub fn improved_at(&self, round: usize) -> bool {
        self.best_round == Some(round)
    }
}

pub fn early_stop_update(monitor: &mut EarlyStopMonitor, round: usize, metric: f64) -> StopDecision {
    monitor.update(round, metric)
}
