//! I/O policies compared by the simulator.
//!
//! A [`Policy`] is an immutable plan: the sequence each worker consumes, how
//! the staging buffer is fed, where samples may be cached and how a fetch
//! source is picked. The simulator executes the plan.

mod nopfs;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use nopfs::{
    choose_min_time, first_access_positions, nopfs_assign_caches, nopfs_choose_source, remote_available,
    remote_available_heuristic, CacheAssignment, FetchSource, Holding, PrefetchProgress,
};

use crate::access::{self, AccessStream, Purpose, Seed};
use crate::analysis;
use crate::error::{Error, Result};
use crate::perfmodel::{DatasetModel, SystemConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicySpec {
    /// Lower bound: samples are always ready.
    Perfect,
    /// Synchronous PFS reads, no prefetching or caching.
    Naive,
    /// Staging buffer filled in access order from one fixed location.
    StagingBuffer {
        /// `"pfs"` or the name of a storage class assumed to hold the whole dataset.
        #[serde(default = "default_source")]
        source: String,
    },
    /// Index-sharded in-memory cache, original order.
    DeepioOrdered {
        #[serde(default)]
        include_ssd: bool,
    },
    /// Index-sharded cache; samples cached nowhere are replaced by local ones.
    DeepioOptimistic {
        #[serde(default)]
        include_ssd: bool,
    },
    /// Up-front copy of a shard to local storage, then local-only training.
    ParallelStaging,
    /// First reader caches a sample in RAM.
    LbannDynamic,
    /// RAM caches filled before training.
    LbannPreload,
    /// Batches rearranged so workers consume what they cached.
    LocalityAware,
    /// Frequency-based placement with performance-model source selection.
    Nopfs {
        /// Estimate remote availability from the requester's own progress.
        #[serde(default)]
        heuristic_mode: bool,
    },
}

fn default_source() -> String {
    "pfs".to_string()
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Perfect => "perfect",
            PolicySpec::Naive => "naive",
            PolicySpec::StagingBuffer { .. } => "staging-buffer",
            PolicySpec::DeepioOrdered { .. } => "deepio-ordered",
            PolicySpec::DeepioOptimistic { .. } => "deepio-optimistic",
            PolicySpec::ParallelStaging => "parallel-staging",
            PolicySpec::LbannDynamic => "lbann-dynamic",
            PolicySpec::LbannPreload => "lbann-preload",
            PolicySpec::LocalityAware => "locality-aware",
            PolicySpec::Nopfs { .. } => "nopfs",
        }
    }

    /// One default-parameter instance of every kind.
    pub fn all() -> Vec<PolicySpec> {
        vec![
            PolicySpec::Perfect,
            PolicySpec::Naive,
            PolicySpec::StagingBuffer { source: default_source() },
            PolicySpec::DeepioOrdered { include_ssd: false },
            PolicySpec::DeepioOptimistic { include_ssd: false },
            PolicySpec::ParallelStaging,
            PolicySpec::LbannDynamic,
            PolicySpec::LbannPreload,
            PolicySpec::LocalityAware,
            PolicySpec::Nopfs { heuristic_mode: false },
        ]
    }

    /// Policies that keep full-dataset randomization and the exact access order.
    pub fn preserves_order(&self) -> bool {
        !matches!(
            self,
            PolicySpec::DeepioOptimistic { .. } | PolicySpec::ParallelStaging | PolicySpec::LocalityAware
        )
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("staging-buffer:") {
            return Ok(PolicySpec::StagingBuffer { source: rest.to_string() });
        }
        let spec = match lower.as_str() {
            "perfect" => PolicySpec::Perfect,
            "naive" => PolicySpec::Naive,
            "staging-buffer" | "stagingbuffer" => PolicySpec::StagingBuffer { source: default_source() },
            "deepio-ordered" | "deepio" => PolicySpec::DeepioOrdered { include_ssd: false },
            "deepio-optimistic" => PolicySpec::DeepioOptimistic { include_ssd: false },
            "parallel-staging" | "parallelstaging" => PolicySpec::ParallelStaging,
            "lbann-dynamic" => PolicySpec::LbannDynamic,
            "lbann-preload" => PolicySpec::LbannPreload,
            "locality-aware" | "localityaware" => PolicySpec::LocalityAware,
            "nopfs" => PolicySpec::Nopfs { heuristic_mode: false },
            "nopfs-heuristic" => PolicySpec::Nopfs { heuristic_mode: true },
            _ => return Err(Error::config(format!("unknown policy '{s}'"))),
        };
        Ok(spec)
    }
}

/// How the staging buffer is fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    /// No I/O at all.
    Ideal,
    /// One read at a time, only after the previous sample was consumed.
    Synchronous,
    /// `p_0` load-balanced prefetch threads, bounded by the staging capacity.
    Staged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceRule {
    PfsOnly,
    /// Every sample is resident in this local class.
    Fixed(usize),
    /// Fastest available source by the performance model.
    MinTime,
    /// Local, then remote, then PFS, whatever the cost.
    Priority,
}

/// Where cached copies come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    None,
    /// Assigned copies are fetched by per-class prefetchers during training.
    Prefetched(CacheAssignment),
    /// Assigned copies are resident when training starts.
    Preloaded(CacheAssignment),
    /// The first worker to read a sample keeps it in `class` while room remains.
    FirstTouch { class: usize },
    /// A fixed owner keeps the sample once it reads it.
    OwnerFill { owners: Vec<Option<(u32, u8)>> },
}

/// A policy instance ready for simulation.
#[derive(Debug, Clone)]
pub struct Policy {
    pub spec: PolicySpec,
    /// What each worker actually consumes.
    pub streams: Vec<AccessStream>,
    pub order_modified: bool,
    /// Fraction of the dataset consumed at least once.
    pub coverage: f64,
    pub pipeline: Pipeline,
    pub sources: SourceRule,
    pub placement: Placement,
    /// Time spent before training starts (staging or preloading).
    pub phase_time_s: f64,
    /// PFS bytes read during that phase.
    pub phase_pfs_mb: f64,
    pub heuristic_mode: bool,
}

fn total_mb(data: &DatasetModel) -> f64 {
    data.total_mb
}

/// Reject policy/system combinations the policy cannot run on.
pub fn check_feasibility(spec: &PolicySpec, cfg: &SystemConfig, dataset_mb: f64) -> Result<()> {
    match spec {
        PolicySpec::LbannDynamic | PolicySpec::LbannPreload => {
            let ram = cfg.storage_classes.get(1).map_or(0.0, |c| c.capacity_mb);
            let aggregate = cfg.workers as f64 * ram;
            if dataset_mb > aggregate {
                return Err(Error::infeasible(format!(
                    "{spec}: dataset of {dataset_mb:.1} MB exceeds aggregate worker memory \
                     (N * d_1 = {} * {ram:.1} MB = {aggregate:.1} MB); the LBANN data store caches \
                     only in memory and fails when the dataset exceeds aggregate worker memory",
                    cfg.workers
                )));
            }
        }
        PolicySpec::ParallelStaging => {
            if cfg.local_capacity_mb() <= 0.0 || cfg.cache_classes().is_empty() {
                return Err(Error::infeasible("parallel-staging: workers have no local storage to stage into"));
            }
        }
        PolicySpec::StagingBuffer { source } if source != "pfs" => {
            let j = cfg
                .class_index(source)
                .filter(|&j| j > 0)
                .ok_or_else(|| Error::config(format!("staging-buffer source '{source}' is not a cache class")))?;
            if dataset_mb > cfg.storage_classes[j].capacity_mb {
                return Err(Error::infeasible(format!(
                    "staging-buffer: dataset of {dataset_mb:.1} MB does not fit in '{source}'"
                )));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Construct a policy instance for the given streams, system and dataset.
pub fn build_policy(
    spec: &PolicySpec,
    seed: Seed,
    streams: &[AccessStream],
    cfg: &SystemConfig,
    data: &DatasetModel,
) -> Result<Policy> {
    cfg.validate()?;
    if streams.len() != cfg.workers {
        return Err(Error::config(format!(
            "{} access streams for {} workers",
            streams.len(),
            cfg.workers
        )));
    }
    check_feasibility(spec, cfg, total_mb(data))?;
    let largest = data.sizes.iter().cloned().fold(0.0, f64::max);
    if largest > cfg.staging().capacity_mb && !matches!(spec, PolicySpec::Perfect | PolicySpec::Naive) {
        return Err(Error::config(format!(
            "largest sample ({largest} MB) does not fit in the staging buffer ({} MB)",
            cfg.staging().capacity_mb
        )));
    }
    let samples = data.samples();
    let classes = cfg.storage_classes.len();
    let mut policy = Policy {
        spec: spec.clone(),
        streams: streams.to_vec(),
        order_modified: false,
        coverage: 0.0,
        pipeline: Pipeline::Staged,
        sources: SourceRule::Priority,
        placement: Placement::None,
        phase_time_s: 0.0,
        phase_pfs_mb: 0.0,
        heuristic_mode: false,
    };

    match spec {
        PolicySpec::Perfect => {
            policy.pipeline = Pipeline::Ideal;
        }
        PolicySpec::Naive => {
            policy.pipeline = Pipeline::Synchronous;
            policy.sources = SourceRule::PfsOnly;
        }
        PolicySpec::StagingBuffer { source } => {
            policy.sources = match cfg.class_index(source) {
                Some(j) if source != "pfs" => SourceRule::Fixed(j),
                _ => SourceRule::PfsOnly,
            };
        }
        PolicySpec::DeepioOrdered { include_ssd } | PolicySpec::DeepioOptimistic { include_ssd } => {
            let max_class = if *include_ssd { classes } else { classes.min(2) };
            let assignment = round_robin_shards(cfg, data, max_class, None);
            if matches!(spec, PolicySpec::DeepioOptimistic { .. }) {
                policy.streams = substitute_uncached(seed, streams, &assignment, samples);
            }
            policy.placement = Placement::Prefetched(assignment);
        }
        PolicySpec::ParallelStaging => {
            let assignment = round_robin_shards(cfg, data, classes, None);
            policy.streams = shard_local_streams(seed, streams, &assignment);
            let (time, pfs) = preload_cost(cfg, data, &assignment);
            policy.phase_time_s = time;
            policy.phase_pfs_mb = pfs;
            policy.placement = Placement::Preloaded(assignment);
        }
        PolicySpec::LbannDynamic => {
            policy.placement = Placement::FirstTouch { class: 1 };
        }
        PolicySpec::LbannPreload => {
            let assignment = round_robin_shards(cfg, data, 2, None);
            let (time, pfs) = preload_cost(cfg, data, &assignment);
            policy.phase_time_s = time;
            policy.phase_pfs_mb = pfs;
            policy.placement = Placement::Preloaded(assignment);
        }
        PolicySpec::LocalityAware => {
            let owners = epoch0_owners(streams, cfg, data);
            policy.streams = locality_reorder(streams, &owners);
            policy.placement = Placement::OwnerFill { owners };
        }
        PolicySpec::Nopfs { heuristic_mode } => {
            let freqs = analysis::frequency_tables(streams, samples);
            let assignment = nopfs_assign_caches(&freqs, streams, cfg, data);
            policy.placement = Placement::Prefetched(assignment);
            policy.sources = SourceRule::MinTime;
            policy.heuristic_mode = *heuristic_mode;
        }
    }

    policy.order_modified = policy.streams.iter().zip(streams).any(|(a, b)| a.entries != b.entries);
    let mut seen = vec![false; samples];
    for s in &policy.streams {
        for &k in &s.entries {
            seen[k as usize] = true;
        }
    }
    policy.coverage = seen.iter().filter(|&&b| b).count() as f64 / samples as f64;
    if policy.coverage < 1.0 && !spec.preserves_order() {
        log::warn!(
            "{spec}: only {} of {samples} samples are ever consumed",
            seen.iter().filter(|&&b| b).count()
        );
    }
    Ok(policy)
}

/// Sample `k` goes to worker `k mod N`, into its fastest class (below
/// `max_class`) that still has room; samples that fit nowhere stay uncached.
fn round_robin_shards(cfg: &SystemConfig, data: &DatasetModel, max_class: usize, _seed: Option<Seed>) -> CacheAssignment {
    let n = cfg.workers;
    let classes = cfg.storage_classes.len();
    let max_class = max_class.min(classes);
    let mut free: Vec<Vec<f64>> = (0..n)
        .map(|_| cfg.storage_classes.iter().map(|c| c.capacity_mb).collect())
        .collect();
    let mut orders = vec![vec![Vec::new(); classes]; n];
    if max_class > 1 {
        for k in 0..data.samples() as u32 {
            let w = k as usize % n;
            let s = data.size(k);
            if let Some(j) = (1..max_class).find(|&j| free[w][j] >= s) {
                free[w][j] -= s;
                orders[w][j].push(k);
            }
        }
    }
    CacheAssignment::new(orders, data.samples())
}

/// Time and PFS traffic to fill every assigned copy before training.
///
/// All workers stage concurrently, so every PFS read sees `N` readers. The
/// classes of one worker fill in parallel with their own thread counts.
fn preload_cost(cfg: &SystemConfig, data: &DatasetModel, assignment: &CacheAssignment) -> (f64, f64) {
    let rates = cfg.rates();
    let mut time: f64 = 0.0;
    let mut pfs = 0.0;
    for classes in &assignment.orders {
        let mut worker_time: f64 = 0.0;
        for (j, order) in classes.iter().enumerate().skip(1) {
            let mut t = 0.0;
            for &k in order {
                let s = data.size(k);
                t += rates.pfs(s, cfg.workers) + s / rates.write_share[j];
                pfs += s;
            }
            worker_time = worker_time.max(t / rates.threads[j] as f64);
        }
        time = time.max(worker_time);
    }
    (time, pfs)
}

fn own_shard(assignment: &CacheAssignment, worker: usize) -> Vec<u32> {
    let mut shard: Vec<u32> = assignment.orders[worker].iter().flatten().copied().collect();
    shard.sort_unstable();
    shard
}

/// Cycles through a worker's shard in a fresh order every epoch.
struct ShardCycle {
    shard: Vec<u32>,
    order: Vec<u32>,
    next: usize,
    seed: Seed,
    worker: u32,
}

impl ShardCycle {
    fn new(shard: Vec<u32>, seed: Seed, worker: usize) -> Self {
        Self { shard, order: Vec::new(), next: 0, seed, worker: worker as u32 }
    }

    fn start_epoch(&mut self, epoch: usize) {
        self.order = self.shard.clone();
        let mut rng = access::stream_rng(self.seed, Purpose::Shard(self.worker), epoch as u64);
        access::shuffle(&mut rng, &mut self.order);
        self.next = 0;
    }

    fn is_empty(&self) -> bool {
        self.shard.is_empty()
    }

    fn take(&mut self) -> u32 {
        if self.next == self.order.len() {
            self.next = 0;
        }
        let k = self.order[self.next];
        self.next += 1;
        k
    }
}

/// Data sharding: each worker consumes only its own shard, reshuffled every
/// epoch, for the same number of steps as the original schedule.
fn shard_local_streams(seed: Seed, streams: &[AccessStream], assignment: &CacheAssignment) -> Vec<AccessStream> {
    streams
        .iter()
        .map(|s| {
            let mut cycle = ShardCycle::new(own_shard(assignment, s.worker_id), seed, s.worker_id);
            let mut out = s.clone();
            if cycle.is_empty() {
                return out;
            }
            for e in 0..s.epochs() {
                cycle.start_epoch(e);
                for pos in s.epoch_boundaries[e]..s.epoch_boundaries[e + 1] {
                    out.entries[pos] = cycle.take();
                }
            }
            out
        })
        .collect()
}

/// Replace accesses to samples no worker caches with samples from the local
/// shard that were not yet used this epoch.
fn substitute_uncached(
    seed: Seed,
    streams: &[AccessStream],
    assignment: &CacheAssignment,
    samples: usize,
) -> Vec<AccessStream> {
    streams
        .iter()
        .map(|s| {
            let mut cycle = ShardCycle::new(own_shard(assignment, s.worker_id), seed, s.worker_id);
            let mut out = s.clone();
            if cycle.is_empty() {
                return out;
            }
            let mut used_in = vec![usize::MAX; samples];
            for e in 0..s.epochs() {
                cycle.start_epoch(e);
                let range = s.epoch_boundaries[e]..s.epoch_boundaries[e + 1];
                let mut unused = cycle.shard.len();
                for pos in range.clone() {
                    let k = s.entries[pos] as usize;
                    if !assignment.directory[k].is_empty() && used_in[k] != e {
                        used_in[k] = e;
                        if assignment.local(s.worker_id, k as u32).is_some() {
                            unused -= 1;
                        }
                    }
                }
                for pos in range {
                    let k = s.entries[pos];
                    if assignment.directory[k as usize].is_empty() {
                        let mut sub = cycle.take();
                        // Prefer shard samples not yet seen this epoch while any remain.
                        while unused > 0 && used_in[sub as usize] == e {
                            sub = cycle.take();
                        }
                        if used_in[sub as usize] != e {
                            used_in[sub as usize] = e;
                            unused -= 1;
                        }
                        out.entries[pos] = sub;
                    }
                }
            }
            out
        })
        .collect()
}

/// The epoch-0 reader of a sample owns it, in its fastest class with room.
fn epoch0_owners(streams: &[AccessStream], cfg: &SystemConfig, data: &DatasetModel) -> Vec<Option<(u32, u8)>> {
    let classes = cfg.storage_classes.len();
    let mut owners = vec![None; data.samples()];
    for s in streams {
        let mut free: Vec<f64> = cfg.storage_classes.iter().map(|c| c.capacity_mb).collect();
        for &k in s.epoch(0) {
            let size = data.size(k);
            if let Some(j) = (1..classes).find(|&j| free[j] >= size) {
                free[j] -= size;
                owners[k as usize] = Some((s.worker_id as u32, j as u8));
            }
        }
    }
    owners
}

/// From epoch 1 on, redistribute each global batch so that every worker takes
/// the samples it owns, filling its slots greedily; leftovers go to workers
/// with free slots in worker order.
fn locality_reorder(streams: &[AccessStream], owners: &[Option<(u32, u8)>]) -> Vec<AccessStream> {
    let mut out = streams.to_vec();
    let n = streams.len();
    let epoch1_batch = streams[0]
        .batch_boundaries
        .iter()
        .position(|&b| b == streams[0].epoch_boundaries.get(1).copied().unwrap_or(usize::MAX));
    let Some(first_batch) = epoch1_batch else {
        return out;
    };
    let batches = streams[0].batches();
    let mut assigned: Vec<Vec<u32>> = vec![Vec::new(); n];
    for h in first_batch..batches {
        let slots: Vec<usize> = streams
            .iter()
            .map(|s| s.batch_boundaries[h + 1] - s.batch_boundaries[h])
            .collect();
        let global: Vec<u32> = streams
            .iter()
            .flat_map(|s| s.entries[s.batch_boundaries[h]..s.batch_boundaries[h + 1]].iter().copied())
            .collect();
        let mut taken = vec![false; global.len()];
        for a in assigned.iter_mut() {
            a.clear();
        }
        for (idx, &k) in global.iter().enumerate() {
            if let Some((o, _)) = owners[k as usize] {
                let o = o as usize;
                if assigned[o].len() < slots[o] {
                    assigned[o].push(idx as u32);
                    taken[idx] = true;
                }
            }
        }
        let mut w = 0;
        for (idx, t) in taken.iter().enumerate() {
            if *t {
                continue;
            }
            while assigned[w].len() >= slots[w] {
                w += 1;
            }
            assigned[w].push(idx as u32);
        }
        for (wk, a) in assigned.iter_mut().enumerate() {
            a.sort_unstable();
            let lo = out[wk].batch_boundaries[h];
            for (off, &idx) in a.iter().enumerate() {
                out[wk].entries[lo + off] = global[idx as usize];
            }
        }
    }
    out
}

/// Samples touched by at least one stream.
pub fn distinct_consumed(streams: &[AccessStream]) -> usize {
    streams.iter().flat_map(|s| s.entries.iter().copied()).collect::<HashSet<u32>>().len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::access::{build_access_streams, PartitionSpec};
    use crate::perfmodel::{StorageClassSpec, ThroughputCurve};

    pub(crate) fn small_system(workers: usize, ram_mb: f64, ssd_mb: f64) -> SystemConfig {
        let class = |name: &str, cap: f64, rate: f64, threads: u32| StorageClassSpec {
            name: name.into(),
            capacity_mb: cap,
            read_curve: ThroughputCurve::constant(threads as f64, rate).unwrap(),
            write_curve: ThroughputCurve::constant(threads as f64, rate).unwrap(),
            threads,
        };
        let mut classes = vec![class("staging", 100.0, 111_000.0, 8)];
        if ram_mb > 0.0 {
            classes.push(class("ram", ram_mb, 85_000.0, 4));
        }
        if ssd_mb > 0.0 {
            classes.push(class("ssd", ssd_mb, 4_000.0, 2));
        }
        SystemConfig {
            workers,
            compute_mbps: 64.0,
            preprocess_mbps: 200.0,
            network_mbps: 24_000.0,
            pfs_curve: ThroughputCurve::new(vec![(1.0, 330.0), (2.0, 730.0), (4.0, 1540.0), (8.0, 2870.0)]).unwrap(),
            storage_classes: classes,
        }
    }

    fn streams(workers: usize, samples: usize, epochs: usize) -> Vec<AccessStream> {
        let part = PartitionSpec { workers, global_batch: workers * 2, epochs, drop_last: false };
        build_access_streams(Seed(5), samples, &part).unwrap()
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicySpec::all() {
            assert_eq!(p.name().parse::<PolicySpec>().unwrap(), p);
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(serde_json::from_str::<PolicySpec>(&json).unwrap(), p);
        }
        assert!("belady".parse::<PolicySpec>().is_err());
    }

    #[test]
    fn everything_fits_single_worker() {
        let data = DatasetModel::from_sizes(vec![1.0; 30]);
        let cfg = small_system(1, 100.0, 0.0);
        let st = streams(1, 30, 2);
        let a = nopfs_assign_caches(&analysis::frequency_tables(&st, 30), &st, &cfg, &data);
        assert_eq!(a.orders[0][1].len(), 30);
    }

    #[test]
    fn hot_sample_goes_to_fastest_class() {
        let data = DatasetModel::from_sizes(vec![1.0, 1.0]);
        let cfg = small_system(1, 1.0, 1.0);
        let stream = AccessStream {
            worker_id: 0,
            entries: vec![1, 0, 0, 1, 0, 0, 0],
            epoch_boundaries: vec![0, 7],
            batch_boundaries: vec![0, 7],
        };
        let freqs = analysis::frequency_tables(std::slice::from_ref(&stream), 2);
        let a = nopfs_assign_caches(&freqs, &[stream], &cfg, &data);
        assert_eq!(a.orders[0][1], vec![0]);
        assert_eq!(a.orders[0][2], vec![1]);
    }

    #[test]
    fn zero_capacity_means_empty_assignment() {
        let data = DatasetModel::from_sizes(vec![1.0; 10]);
        let cfg = small_system(2, 0.0, 0.0);
        let st = streams(2, 10, 2);
        let a = nopfs_assign_caches(&analysis::frequency_tables(&st, 10), &st, &cfg, &data);
        assert_eq!(a.distinct_cached(), 0);
    }

    #[test]
    fn pfs_fallback_and_remote_choice() {
        let data = DatasetModel::from_sizes(vec![1.0; 4]);
        let cfg = small_system(4, 0.0, 10.0);
        // Worker 1 holds sample 2 on its SSD and has prefetched it.
        let mut orders = vec![vec![Vec::new(), Vec::new()]; 4];
        orders[1][1] = vec![2];
        let a = CacheAssignment::new(orders, 4);
        let mut progress = PrefetchProgress::none(4, 2);
        assert_eq!(nopfs_choose_source(2, 0, &a, &progress, 4, &cfg, &data), FetchSource::Pfs);
        progress.per_worker[1][1] = 1;
        // Remote SSD at min(24 GB/s, 2 GB/s) beats a PFS share of 385 MB/s.
        assert_eq!(
            nopfs_choose_source(2, 0, &a, &progress, 4, &cfg, &data),
            FetchSource::Remote { worker: 1, class: 1 }
        );
        assert_eq!(nopfs_choose_source(3, 0, &a, &progress, 4, &cfg, &data), FetchSource::Pfs);
        // The holder itself reads locally.
        assert_eq!(nopfs_choose_source(2, 1, &a, &progress, 4, &cfg, &data), FetchSource::Local { class: 1 });
    }

    #[test]
    fn availability_rules() {
        let mut orders = vec![vec![Vec::new(), Vec::new()]; 2];
        orders[1][1] = vec![7, 3, 5];
        let a = CacheAssignment::new(orders, 8);
        let mut p = PrefetchProgress::none(2, 2);
        assert!(!remote_available(7, 1, &a, &p));
        p.per_worker[1][1] = 2;
        assert!(remote_available(3, 1, &a, &p));
        assert!(!remote_available(5, 1, &a, &p));
        // Requester 0 has no progress of its own, so it believes nothing.
        assert!(!remote_available_heuristic(3, 1, 0, &a, &p));
        p.per_worker[0][1] = 3;
        assert!(remote_available_heuristic(5, 1, 0, &a, &p));
    }

    #[test]
    fn ties_prefer_local_then_remote() {
        let (src, _) = choose_min_time([(1, 1.0)], [(0, 1, 1.0)], 1.0);
        assert_eq!(src, FetchSource::Local { class: 1 });
        let (src, _) = choose_min_time([], [(2, 1, 1.0), (3, 1, 1.0)], 1.0);
        assert_eq!(src, FetchSource::Remote { worker: 2, class: 1 });
        let (src, _) = choose_min_time([], [], 1.0);
        assert_eq!(src, FetchSource::Pfs);
    }

    #[test]
    fn lbann_needs_aggregate_ram() {
        let cfg = small_system(4, 10.0, 1000.0);
        assert!(matches!(check_feasibility(&PolicySpec::LbannDynamic, &cfg, 41.0), Err(Error::Infeasible(_))));
        assert!(check_feasibility(&PolicySpec::LbannPreload, &cfg, 40.0).is_ok());
    }

    #[test]
    fn parallel_staging_covers_dataset_when_it_fits() {
        let data = DatasetModel::from_sizes(vec![1.0; 40]);
        let cfg = small_system(4, 10.0, 0.0);
        let st = streams(4, 40, 3);
        let p = build_policy(&PolicySpec::ParallelStaging, Seed(1), &st, &cfg, &data).unwrap();
        assert!(p.order_modified);
        assert_eq!(p.coverage, 1.0);
        assert!(p.phase_time_s > 0.0);
        let small = small_system(4, 5.0, 0.0);
        let p = build_policy(&PolicySpec::ParallelStaging, Seed(1), &st, &small, &data).unwrap();
        assert!(p.coverage <= 0.5 + 1e-12);
        // Each worker only ever reads its own shard.
        if let Placement::Preloaded(a) = &p.placement {
            for s in &p.streams {
                assert!(s.entries.iter().all(|&k| a.local(s.worker_id, k).is_some()));
            }
        } else {
            panic!("parallel staging must preload");
        }
    }

    #[test]
    fn locality_aware_keeps_global_batches() {
        let data = DatasetModel::from_sizes(vec![1.0; 32]);
        let cfg = small_system(4, 4.0, 0.0);
        let st = streams(4, 32, 3);
        let p = build_policy(&PolicySpec::LocalityAware, Seed(1), &st, &cfg, &data).unwrap();
        for h in 0..st[0].batches() {
            let mut before: Vec<u32> = st
                .iter()
                .flat_map(|s| s.entries[s.batch_boundaries[h]..s.batch_boundaries[h + 1]].to_vec())
                .collect();
            let mut after: Vec<u32> = p
                .streams
                .iter()
                .flat_map(|s| s.entries[s.batch_boundaries[h]..s.batch_boundaries[h + 1]].to_vec())
                .collect();
            before.sort_unstable();
            after.sort_unstable();
            assert_eq!(before, after);
        }
        assert_eq!(p.coverage, 1.0);
        // Epoch 0 is untouched.
        for (a, b) in p.streams.iter().zip(&st) {
            assert_eq!(a.epoch(0), b.epoch(0));
        }
    }

    #[test]
    fn deepio_optimistic_substitutes_uncached() {
        let data = DatasetModel::from_sizes(vec![1.0; 40]);
        let cfg = small_system(2, 5.0, 0.0);
        let st = streams(2, 40, 2);
        let p = build_policy(&PolicySpec::DeepioOptimistic { include_ssd: false }, Seed(1), &st, &cfg, &data).unwrap();
        assert!(p.order_modified);
        assert!(p.coverage < 1.0);
        if let Placement::Prefetched(a) = &p.placement {
            for s in &p.streams {
                assert!(s.entries.iter().all(|&k| !a.directory[k as usize].is_empty()));
            }
        }
        let ordered = build_policy(&PolicySpec::DeepioOrdered { include_ssd: false }, Seed(1), &st, &cfg, &data).unwrap();
        assert!(!ordered.order_modified);
        assert_eq!(ordered.coverage, 1.0);
    }
}
