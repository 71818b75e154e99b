//! Frequency-driven cache placement and performance-model source selection.

use smallvec::SmallVec;

use crate::access::{AccessStream, FrequencyTable};
use crate::perfmodel::{self, DatasetModel, SystemConfig};

/// Where a sample is read from when filling the staging buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FetchSource {
    Local { class: usize },
    Remote { worker: usize, class: usize },
    Pfs,
}

/// One cached copy of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Holding {
    pub worker: u32,
    pub class: u8,
    /// Position in the holder's prefetch order for that class.
    pub pos: u32,
}

/// Per-worker, per-class list of samples to cache, in prefetch order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CacheAssignment {
    /// `orders[worker][class]`; `class` 0 (staging buffer) is always empty.
    pub orders: Vec<Vec<Vec<u32>>>,
    /// `directory[sample]` lists every assigned copy.
    pub directory: Vec<SmallVec<[Holding; 2]>>,
}

impl CacheAssignment {
    pub fn new(orders: Vec<Vec<Vec<u32>>>, samples: usize) -> Self {
        let mut directory = vec![SmallVec::new(); samples];
        for (w, classes) in orders.iter().enumerate() {
            for (j, order) in classes.iter().enumerate() {
                for (pos, &k) in order.iter().enumerate() {
                    directory[k as usize].push(Holding { worker: w as u32, class: j as u8, pos: pos as u32 });
                }
            }
        }
        Self { orders, directory }
    }

    pub fn empty(workers: usize, classes: usize, samples: usize) -> Self {
        Self::new(vec![vec![Vec::new(); classes]; workers], samples)
    }

    pub fn workers(&self) -> usize {
        self.orders.len()
    }

    /// The local copy of `sample` on `worker`, if one is assigned.
    pub fn local(&self, worker: usize, sample: u32) -> Option<Holding> {
        self.directory[sample as usize].iter().copied().find(|h| h.worker as usize == worker)
    }

    pub fn assigned_bytes(&self, worker: usize, class: usize, data: &DatasetModel) -> f64 {
        self.orders[worker][class].iter().map(|&k| data.size(k)).sum()
    }

    /// Distinct samples cached by at least one worker.
    pub fn distinct_cached(&self) -> usize {
        self.directory.iter().filter(|h| !h.is_empty()).count()
    }
}

/// Position of each sample's first access in `stream` (`u32::MAX` if never).
pub fn first_access_positions(stream: &AccessStream, samples: usize) -> Vec<u32> {
    let mut first = vec![u32::MAX; samples];
    for (pos, &k) in stream.entries.iter().enumerate() {
        let slot = &mut first[k as usize];
        if *slot == u32::MAX {
            *slot = pos as u32;
        }
    }
    first
}

/// Fill each worker's cache classes with its most frequently accessed samples.
///
/// Samples are ranked by access count (ties: earlier first access) and placed
/// first-fit into the fastest class with room. Samples the worker never reads
/// are not cached. Within a class the prefetch order is first-access order.
pub fn nopfs_assign_caches(
    freqs: &[FrequencyTable],
    streams: &[AccessStream],
    cfg: &SystemConfig,
    data: &DatasetModel,
) -> CacheAssignment {
    let classes = cfg.storage_classes.len();
    let samples = data.samples();
    let mut orders = Vec::with_capacity(freqs.len());
    for (table, stream) in freqs.iter().zip(streams) {
        let first = first_access_positions(stream, samples);
        let mut ranked: Vec<u32> = (0..samples as u32).filter(|&k| table.counts[k as usize] > 0).collect();
        ranked.sort_unstable_by(|&a, &b| {
            table.counts[b as usize]
                .cmp(&table.counts[a as usize])
                .then(first[a as usize].cmp(&first[b as usize]))
        });
        let mut free: Vec<f64> = cfg.storage_classes.iter().map(|c| c.capacity_mb).collect();
        let mut per_class: Vec<Vec<u32>> = vec![Vec::new(); classes];
        let mut remaining: f64 = free[1..].iter().sum();
        for k in ranked {
            if remaining <= 0.0 {
                break;
            }
            let s = data.size(k);
            if let Some(j) = (1..classes).find(|&j| free[j] >= s) {
                free[j] -= s;
                remaining -= s;
                per_class[j].push(k);
            }
        }
        for order in &mut per_class {
            order.sort_unstable_by_key(|&k| first[k as usize]);
        }
        orders.push(per_class);
    }
    CacheAssignment::new(orders, samples)
}

/// Completed prefetches per worker and class, counted along each prefetch order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefetchProgress {
    pub per_worker: Vec<Vec<usize>>,
}

impl PrefetchProgress {
    pub fn none(workers: usize, classes: usize) -> Self {
        Self { per_worker: vec![vec![0; classes]; workers] }
    }

    pub fn get(&self, worker: usize, class: usize) -> usize {
        self.per_worker[worker][class]
    }
}

/// Whether `holder` has already prefetched its copy of `sample`.
pub fn remote_available(sample: u32, holder: usize, assignment: &CacheAssignment, progress: &PrefetchProgress) -> bool {
    assignment
        .local(holder, sample)
        .is_some_and(|h| (h.pos as usize) < progress.get(holder, h.class as usize))
}

/// Requester-side guess of [`remote_available`]: assume the holder has
/// progressed as far through its prefetch order as the requester has through its own.
pub fn remote_available_heuristic(
    sample: u32,
    holder: usize,
    requester: usize,
    assignment: &CacheAssignment,
    progress: &PrefetchProgress,
) -> bool {
    assignment
        .local(holder, sample)
        .is_some_and(|h| (h.pos as usize) < progress.get(requester, h.class as usize))
}

/// Argmin over candidate fetch times.
///
/// Candidates must be supplied in preference order (local classes fastest
/// first, then remotes by worker id); a later candidate only wins if strictly
/// faster, which yields Local > Remote > PFS on ties.
pub fn choose_min_time(
    local: impl IntoIterator<Item = (usize, f64)>,
    remote: impl IntoIterator<Item = (usize, usize, f64)>,
    pfs_time: f64,
) -> (FetchSource, f64) {
    let mut best: Option<(FetchSource, f64)> = None;
    let mut consider = |src: FetchSource, t: f64| {
        if best.is_none_or(|(_, bt)| t < bt) {
            best = Some((src, t));
        }
    };
    for (class, t) in local {
        consider(FetchSource::Local { class }, t);
    }
    for (worker, class, t) in remote {
        consider(FetchSource::Remote { worker, class }, t);
    }
    consider(FetchSource::Pfs, pfs_time);
    best.expect("PFS is always a candidate")
}

/// Fastest source for `sample` as seen by `worker`, with `gamma` PFS readers.
pub fn nopfs_choose_source(
    sample: u32,
    worker: usize,
    assignment: &CacheAssignment,
    progress: &PrefetchProgress,
    gamma: usize,
    cfg: &SystemConfig,
    data: &DatasetModel,
) -> FetchSource {
    let s = data.size(sample);
    let holdings = &assignment.directory[sample as usize];
    let local = holdings
        .iter()
        .filter(|h| h.worker as usize == worker && (h.pos as usize) < progress.get(worker, h.class as usize))
        .map(|h| (h.class as usize, perfmodel::fetch_time_local(s, cfg, h.class as usize)));
    let mut remotes: Vec<(usize, usize, f64)> = holdings
        .iter()
        .filter(|h| h.worker as usize != worker && remote_available(sample, h.worker as usize, assignment, progress))
        .map(|h| (h.worker as usize, h.class as usize, perfmodel::fetch_time_remote(s, cfg, h.class as usize)))
        .collect();
    remotes.sort_unstable_by_key(|&(w, j, _)| (w, j));
    let pfs = perfmodel::fetch_time_pfs(s, cfg, gamma.max(1)).expect("gamma >= 1");
    choose_min_time(local, remotes, pfs).0
}
