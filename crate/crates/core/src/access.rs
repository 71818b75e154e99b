//! Reproducible SGD access streams.
//!
//! Every epoch shuffles the sample indices with Fisher-Yates and cuts the
//! permutation into global mini-batches; worker `i` takes the `i`-th contiguous
//! slice of every global batch. Given the seed, the full reference string of
//! every worker is known in advance.
//!
//! The generator is xoshiro256** seeded through SplitMix64. Independent
//! purposes (shuffling, sample sizes, shard orders) live on disjoint
//! `long_jump` streams of the same seed, and the epoch index selects a `jump`
//! sub-stream, so changing the epoch count never perturbs earlier epochs.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PRNG seed that fixes the whole training access pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Shuffle,
    SampleSizes,
    /// Per-worker shard orders for sharding policies.
    Shard(u32),
}

impl Purpose {
    fn long_jumps(self) -> u64 {
        match self {
            Purpose::Shuffle => 0,
            Purpose::SampleSizes => 1,
            Purpose::Shard(w) => 2 + w as u64,
        }
    }
}

/// Deterministic generator for `(seed, purpose, index)`.
pub fn stream_rng(seed: Seed, purpose: Purpose, index: u64) -> Xoshiro256StarStar {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed.0);
    for _ in 0..purpose.long_jumps() {
        rng.long_jump();
    }
    for _ in 0..index {
        rng.jump();
    }
    rng
}

/// Uniform integer in `[0, n)` by Lemire's multiply-shift with rejection.
///
/// Pinned here rather than delegated to `rand` so streams stay bit-identical
/// across `rand` releases.
pub fn bounded(rng: &mut impl RngCore, n: u64) -> u64 {
    debug_assert!(n > 0);
    let mut m = rng.next_u64() as u128 * n as u128;
    let mut low = m as u64;
    if low < n {
        let threshold = n.wrapping_neg() % n;
        while low < threshold {
            m = rng.next_u64() as u128 * n as u128;
            low = m as u64;
        }
    }
    (m >> 64) as u64
}

/// In-place descending Fisher-Yates.
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = bounded(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

fn shuffle_with(rng: &mut Xoshiro256StarStar, samples: usize) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..samples as u32).collect();
    shuffle(rng, &mut perm);
    perm
}

/// The shuffled sample order of one epoch.
pub fn epoch_permutation(seed: Seed, epoch: u64, samples: usize) -> Vec<u32> {
    let mut rng = stream_rng(seed, Purpose::Shuffle, epoch);
    shuffle_with(&mut rng, samples)
}

/// Sequential epoch permutations, reusing the jump state between epochs.
pub struct EpochPermutations {
    rng: Xoshiro256StarStar,
    samples: usize,
}

impl EpochPermutations {
    pub fn new(seed: Seed, samples: usize) -> Self {
        Self { rng: stream_rng(seed, Purpose::Shuffle, 0), samples }
    }
}

impl Iterator for EpochPermutations {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let mut rng = self.rng.clone();
        self.rng.jump();
        Some(shuffle_with(&mut rng, self.samples))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub workers: usize,
    /// Global mini-batch size, summed over workers.
    pub global_batch: usize,
    pub epochs: usize,
    pub drop_last: bool,
}

impl PartitionSpec {
    pub fn validate(&self, samples: usize) -> Result<()> {
        if samples == 0 {
            return Err(Error::config("dataset must contain at least one sample"));
        }
        if self.workers == 0 {
            return Err(Error::config("need at least one worker"));
        }
        if self.epochs == 0 {
            return Err(Error::config("need at least one epoch"));
        }
        if self.global_batch < self.workers {
            return Err(Error::config(format!(
                "global batch {} is smaller than the worker count {}",
                self.global_batch, self.workers
            )));
        }
        if self.global_batch > samples {
            return Err(Error::config(format!(
                "global batch {} exceeds dataset size {samples}",
                self.global_batch
            )));
        }
        Ok(())
    }

    /// Iterations per epoch.
    pub fn iterations(&self, samples: usize) -> usize {
        if self.drop_last {
            samples / self.global_batch
        } else {
            samples.div_ceil(self.global_batch)
        }
    }

    /// Range of worker `worker` inside a global batch of length `len`.
    pub fn slice_of(&self, worker: usize, len: usize) -> std::ops::Range<usize> {
        worker * len / self.workers..(worker + 1) * len / self.workers
    }
}

/// One worker's clairvoyant reference string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessStream {
    pub worker_id: usize,
    pub entries: Vec<u32>,
    /// Start offsets of every epoch, plus a final `entries.len()`.
    pub epoch_boundaries: Vec<usize>,
    /// Start offsets of every local batch, plus a final `entries.len()`.
    pub batch_boundaries: Vec<usize>,
}

impl AccessStream {
    pub fn epochs(&self) -> usize {
        self.epoch_boundaries.len() - 1
    }

    pub fn batches(&self) -> usize {
        self.batch_boundaries.len() - 1
    }

    pub fn epoch(&self, epoch: usize) -> &[u32] {
        &self.entries[self.epoch_boundaries[epoch]..self.epoch_boundaries[epoch + 1]]
    }

    /// Epoch index containing stream position `pos`.
    pub fn epoch_of(&self, pos: usize) -> usize {
        self.epoch_boundaries.partition_point(|&b| b <= pos) - 1
    }
}

/// Per-worker streams for mini-batch SGD without replacement.
pub fn build_access_streams(
    seed: Seed,
    samples: usize,
    part: &PartitionSpec,
) -> Result<Vec<AccessStream>> {
    part.validate(samples)?;
    let iterations = part.iterations(samples);
    let per_epoch = samples.div_ceil(part.workers);
    let mut streams: Vec<AccessStream> = (0..part.workers)
        .map(|w| AccessStream {
            worker_id: w,
            entries: Vec::with_capacity(per_epoch * part.epochs),
            epoch_boundaries: vec![0],
            batch_boundaries: vec![0],
        })
        .collect();

    for perm in EpochPermutations::new(seed, samples).take(part.epochs) {
        for h in 0..iterations {
            let lo = h * part.global_batch;
            let hi = ((h + 1) * part.global_batch).min(samples);
            let batch = &perm[lo..hi];
            for s in streams.iter_mut() {
                let range = part.slice_of(s.worker_id, batch.len());
                s.entries.extend_from_slice(&batch[range]);
                s.batch_boundaries.push(s.entries.len());
            }
        }
        for s in streams.iter_mut() {
            s.epoch_boundaries.push(s.entries.len());
        }
    }
    Ok(streams)
}

/// Access counts `r_k` of one worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    pub worker_id: usize,
    pub counts: Vec<u32>,
}

/// Count accesses of every sample in the selected epochs of `stream`.
pub fn access_frequencies(
    stream: &AccessStream,
    samples: usize,
    epochs: std::ops::Range<usize>,
) -> FrequencyTable {
    let mut counts = vec![0u32; samples];
    let epochs = epochs.start.min(stream.epochs())..epochs.end.min(stream.epochs());
    let lo = stream.epoch_boundaries[epochs.start];
    let hi = stream.epoch_boundaries[epochs.end.max(epochs.start)];
    for &k in &stream.entries[lo..hi] {
        counts[k as usize] += 1;
    }
    FrequencyTable { worker_id: stream.worker_id, counts }
}
