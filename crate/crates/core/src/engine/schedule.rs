use rand::seq::SliceRandom;
use rand::Rng;

/// How many SGD steps one Map task runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSchedule {
    /// Exactly `iterations_per_map` steps, reshuffling whenever a pass runs out.
    FixedIterations,
    /// One shuffled pass over the shard; the last batch may be short.
    FullPass,
}

/// Draws mini-batches of row indices from `0..len`.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    pub fn new<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(rng);
        BatchSampler { order, pos: 0 }
    }

    /// Next `min(size, len)` indices. When the current pass cannot fill a
    /// whole batch, its tail is dropped and a fresh permutation is drawn.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, size: usize, rng: &mut R) -> &[usize] {
        let size = size.min(self.order.len());
        if self.pos + size > self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let batch = &self.order[self.pos..self.pos + size];
        self.pos += size;
        batch
    }

    /// The current permutation cut into consecutive batches.
    pub fn pass(&self, size: usize) -> impl Iterator<Item = &[usize]> {
        self.order.chunks(size.max(1))
    }
}

/// The full batch schedule of one Map task.
pub fn map_batches<R: Rng + ?Sized>(
    len: usize,
    batch_size: usize,
    iterations: usize,
    schedule: MapSchedule,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    if len == 0 {
        return Vec::new();
    }
    let mut sampler = BatchSampler::new(len, rng);
    match schedule {
        MapSchedule::FullPass => sampler.pass(batch_size).map(<[usize]>::to_vec).collect(),
        MapSchedule::FixedIterations => (0..iterations)
            .map(|_| sampler.next_batch(batch_size, rng).to_vec())
            .collect(),
    }
}
