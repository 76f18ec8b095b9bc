use super::{AccelSample, ActivityWindow, DEFAULT_STEP, DEFAULT_WINDOW_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    pub window_len: usize,
    pub step: usize,
    /// Break runs where consecutive timestamps differ by more than this.
    pub max_gap: Option<i64>,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            window_len: DEFAULT_WINDOW_LEN,
            step: DEFAULT_STEP,
            max_gap: None,
        }
    }
}

/// Sliding windows over an ordered sample stream.
///
/// The stream is cut into runs of consecutive samples sharing user and label
/// (and, with `max_gap`, without timestamp gaps). Within a run, window `k`
/// covers `[k*step, k*step + window_len)`; short tails are dropped.
pub fn frame(samples: &[AccelSample], cfg: FrameConfig) -> Vec<ActivityWindow> {
    assert!(cfg.step >= 1 && cfg.window_len >= 1, "window_len and step must be positive");
    let mut windows = Vec::new();
    let mut start = 0;
    while start < samples.len() {
        let mut end = start + 1;
        while end < samples.len() && same_run(&samples[end - 1], &samples[end], cfg.max_gap) {
            end += 1;
        }
        let run = &samples[start..end];
        let mut k = 0;
        while k + cfg.window_len <= run.len() {
            let slice = &run[k..k + cfg.window_len];
            windows.push(ActivityWindow {
                channels: [
                    slice.iter().map(|s| s.x).collect(),
                    slice.iter().map(|s| s.y).collect(),
                    slice.iter().map(|s| s.z).collect(),
                ],
                label: slice[0].label,
                user_id: slice[0].user_id,
            });
            k += cfg.step;
        }
        start = end;
    }
    windows
}

fn same_run(prev: &AccelSample, next: &AccelSample, max_gap: Option<i64>) -> bool {
    prev.user_id == next.user_id
        && prev.label == next.label
        && max_gap.is_none_or(|g| (next.timestamp - prev.timestamp).abs() <= g)
}
