//! Discrete-event evaluation of the per-worker consumption recurrence.
//!
//! Every worker has one staging pipe (pipe 0) and one prefetch pipe per cache
//! class (pipes `1..=J`). A pipe is serial: its next fetch starts once the
//! previous one has finished and, for the staging pipe, once enough of the
//! buffer has been consumed. Fetch durations are fixed when a fetch starts,
//! using the system state at that instant. Events are processed in
//! `(time, worker, pipe)` order, so every decision only sees fetches that
//! started no later than itself.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::perfmodel::{DatasetModel, Rates, SystemConfig};
use crate::policies::{choose_min_time, FetchSource, Pipeline, Placement, Policy, SourceRule};

use super::{BatchRecord, LocationBreakdown, SimOptions, SimResult};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    worker: usize,
    pipe: usize,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.worker.cmp(&other.worker))
            .then(self.pipe.cmp(&other.pipe))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
struct Prefetcher {
    order: Vec<u32>,
    next: usize,
    completions: Vec<f64>,
    busy_until: f64,
}

impl Prefetcher {
    fn progress(&self, now: f64) -> usize {
        self.completions.partition_point(|&c| c <= now)
    }

    fn has(&self, pos: usize, now: f64) -> bool {
        self.completions.get(pos).is_some_and(|&c| c <= now)
    }
}

struct WorkerState {
    next: usize,
    /// Earliest consumption start of the next entry (`t_{f-1} + s/c`).
    ready: f64,
    /// Entries counted against the free-space rule: `(t_g, s_g)`.
    window: VecDeque<(f64, f64)>,
    window_mb: f64,
    /// Entries fetched but not yet consumed, for occupancy tracking.
    resident: VecDeque<(f64, f64)>,
    resident_mb: f64,
    /// Per pipe: end of its current PFS transfer.
    pfs_busy_until: Vec<f64>,
    prefetchers: Vec<Prefetcher>,
    stall: f64,
    finish: f64,
    timeline: Vec<f64>,
    batch: usize,
    batch_start: f64,
    batch_bytes: Vec<f64>,
}

/// Dynamic cache state for placements that fill during training.
enum Dynamic {
    None,
    FirstTouch { class: usize, holder: Vec<Option<(u32, f64)>>, free: Vec<f64> },
    OwnerFill { owners: Vec<Option<(u32, u8)>>, filled_at: Vec<f64> },
}

struct Copy {
    worker: usize,
    class: usize,
    present: bool,
    believed: bool,
}

struct Engine<'a> {
    cfg: &'a SystemConfig,
    data: &'a DatasetModel,
    policy: &'a Policy,
    rates: Rates,
    options: SimOptions,
    workers: Vec<WorkerState>,
    dynamic: Dynamic,
    loc_time: Vec<f64>,
    loc_bytes: Vec<f64>,
    background_pfs_mb: f64,
    false_positives: u64,
    max_occupancy: f64,
    epoch_end: Vec<f64>,
    batches: Vec<BatchRecord>,
}

const STAGING: usize = 0;

impl<'a> Engine<'a> {
    fn classes(&self) -> usize {
        self.cfg.storage_classes.len()
    }

    fn remote_loc(&self) -> usize {
        self.classes()
    }

    fn pfs_loc(&self) -> usize {
        self.classes() + 1
    }

    fn gamma(&self, worker: usize, now: f64) -> usize {
        1 + self
            .workers
            .iter()
            .enumerate()
            .filter(|&(h, w)| h != worker && w.pfs_busy_until.iter().any(|&b| b > now))
            .count()
    }

    /// Every cached copy of `sample`, with exact and requester-believed presence.
    fn copies(&self, sample: u32, requester: usize, now: f64) -> SmallVec<[Copy; 2]> {
        let mut out = SmallVec::new();
        match (&self.policy.placement, &self.dynamic) {
            (Placement::Prefetched(a), _) => {
                for h in &a.directory[sample as usize] {
                    let (w, j, pos) = (h.worker as usize, h.class as usize, h.pos as usize);
                    let present = self.workers[w].prefetchers[j].has(pos, now);
                    let believed = if w == requester || !self.policy.heuristic_mode {
                        present
                    } else {
                        pos < self.workers[requester].prefetchers[j].progress(now)
                    };
                    out.push(Copy { worker: w, class: j, present, believed });
                }
            }
            (Placement::Preloaded(a), _) => {
                for h in &a.directory[sample as usize] {
                    out.push(Copy { worker: h.worker as usize, class: h.class as usize, present: true, believed: true });
                }
            }
            (_, Dynamic::FirstTouch { class, holder, .. }) => {
                if let Some((w, at)) = holder[sample as usize] {
                    let present = at <= now;
                    out.push(Copy { worker: w as usize, class: *class, present, believed: present });
                }
            }
            (_, Dynamic::OwnerFill { owners, filled_at }) => {
                if let Some((w, j)) = owners[sample as usize] {
                    let present = filled_at[sample as usize] <= now;
                    out.push(Copy { worker: w as usize, class: j as usize, present, believed: present });
                }
            }
            _ => {}
        }
        out
    }

    /// Per-MB read rate from `class` on `holder`, halved while that class's
    /// prefetcher is writing.
    fn shared_rate(&self, holder: usize, class: usize, base: f64, now: f64) -> f64 {
        let busy = self.workers[holder].prefetchers.get(class).is_some_and(|p| p.busy_until > now);
        if busy {
            base / 2.0
        } else {
            base
        }
    }

    fn local_time(&self, worker: usize, class: usize, size: f64, now: f64) -> f64 {
        size / self.shared_rate(worker, class, self.rates.local_share[class], now)
    }

    fn remote_time(&self, holder: usize, class: usize, size: f64, now: f64) -> f64 {
        size / self.shared_rate(holder, class, self.rates.remote_share[class], now)
    }

    fn min_time(&self, copies: &[Copy], worker: usize, size: f64, gamma: usize, now: f64, believed: bool) -> (FetchSource, f64) {
        let avail = |c: &&Copy| if believed { c.believed } else { c.present };
        let mut local: SmallVec<[(usize, f64); 2]> = copies
            .iter()
            .filter(|c| c.worker == worker)
            .filter(avail)
            .map(|c| (c.class, self.local_time(worker, c.class, size, now)))
            .collect();
        local.sort_unstable_by_key(|&(j, _)| j);
        let mut remote: SmallVec<[(usize, usize, f64); 4]> = copies
            .iter()
            .filter(|c| c.worker != worker)
            .filter(avail)
            .map(|c| (c.worker, c.class, self.remote_time(c.worker, c.class, size, now)))
            .collect();
        remote.sort_unstable_by_key(|&(w, j, _)| (w, j));
        choose_min_time(local, remote, self.rates.pfs(size, gamma))
    }

    /// Source and fetch time for a staging fetch.
    fn choose_staging_source(&mut self, worker: usize, sample: u32, now: f64) -> (FetchSource, f64) {
        let size = self.data.size(sample);
        let gamma = self.gamma(worker, now);
        match self.policy.sources {
            SourceRule::PfsOnly => (FetchSource::Pfs, self.rates.pfs(size, gamma)),
            SourceRule::Fixed(j) => (FetchSource::Local { class: j }, self.local_time(worker, j, size, now)),
            SourceRule::Priority => {
                let copies = self.copies(sample, worker, now);
                if let Some(c) = copies.iter().filter(|c| c.present && c.worker == worker).min_by_key(|c| c.class) {
                    return (FetchSource::Local { class: c.class }, self.local_time(worker, c.class, size, now));
                }
                if let Some(c) = copies
                    .iter()
                    .filter(|c| c.present && c.worker != worker)
                    .min_by_key(|c| (c.worker, c.class))
                {
                    return (
                        FetchSource::Remote { worker: c.worker, class: c.class },
                        self.remote_time(c.worker, c.class, size, now),
                    );
                }
                (FetchSource::Pfs, self.rates.pfs(size, gamma))
            }
            SourceRule::MinTime => {
                let copies = self.copies(sample, worker, now);
                let (src, t) = self.min_time(&copies, worker, size, gamma, now, true);
                if let FetchSource::Remote { worker: h, class: j } = src {
                    let truly = copies.iter().any(|c| c.worker == h && c.class == j && c.present);
                    if !truly {
                        self.false_positives += 1;
                        return self.min_time(&copies, worker, size, gamma, now, false);
                    }
                }
                (src, t)
            }
        }
    }

    fn location_of(&self, src: FetchSource) -> usize {
        match src {
            FetchSource::Local { class } => class,
            FetchSource::Remote { .. } => self.remote_loc(),
            FetchSource::Pfs => self.pfs_loc(),
        }
    }

    fn staging_fetch(&mut self, w: usize, now: f64) -> Result<Option<f64>> {
        let stream = &self.policy.streams[w];
        let f = self.workers[w].next;
        let sample = stream.entries[f];
        let size = self.data.size(sample);
        let (src, fetch) = self.choose_staging_source(w, sample, now);
        let write = self.rates.write(size);
        let synchronous = self.policy.pipeline == Pipeline::Synchronous;
        let p0 = if synchronous { 1.0 } else { self.rates.threads[STAGING] as f64 };
        let avail = now + (fetch + write) / p0;
        if src == FetchSource::Pfs {
            self.workers[w].pfs_busy_until[STAGING] = now + fetch / p0;
        }
        let loc = self.location_of(src);
        self.loc_time[loc] += fetch;
        self.loc_bytes[loc] += size;
        self.loc_time[STAGING] += write;
        self.loc_bytes[STAGING] += size;

        match &mut self.dynamic {
            Dynamic::FirstTouch { holder, free, .. } => {
                if holder[sample as usize].is_none() && free[w] >= size {
                    free[w] -= size;
                    holder[sample as usize] = Some((w as u32, avail));
                }
            }
            Dynamic::OwnerFill { owners, filled_at } => {
                if owners[sample as usize].is_some_and(|(o, _)| o as usize == w) && filled_at[sample as usize].is_infinite() {
                    filled_at[sample as usize] = avail;
                }
            }
            Dynamic::None => {}
        }

        let compute = size / self.rates.compute_mbps;
        let record_batches = self.options.record_batches;
        let record_timeline = self.options.record_timeline;
        let ws = &mut self.workers[w];
        let t = avail.max(ws.ready);
        ws.stall += (avail - ws.ready).max(0.0);
        ws.ready = t + compute;
        ws.finish = ws.ready;
        if record_timeline {
            ws.timeline.push(t);
        }
        if record_batches {
            ws.batch_bytes[loc] += size;
        }
        ws.window.push_back((t, size));
        ws.window_mb += size;
        ws.next += 1;

        // Empty local batches (short final global batch) close immediately.
        while ws.batch < stream.batches() && stream.batch_boundaries[ws.batch + 1] <= ws.next {
            if record_batches {
                let bytes = std::mem::replace(&mut ws.batch_bytes, vec![0.0; self.loc_bytes.len()]);
                self.batches.push(BatchRecord {
                    batch_index: ws.batch,
                    worker: w,
                    seconds: ws.finish - ws.batch_start,
                    bytes_mb: bytes,
                });
            }
            ws.batch += 1;
            ws.batch_start = ws.finish;
        }
        let e = stream.epoch_of(f);
        if stream.epoch_boundaries[e + 1] == ws.next {
            self.epoch_end[e] = self.epoch_end[e].max(ws.finish);
        }

        if ws.next == stream.entries.len() {
            return Ok(None);
        }
        if synchronous {
            return Ok(Some(ws.ready));
        }

        // The next fetch needs room for its sample: wait until enough of the
        // oldest resident entries have been consumed.
        let capacity = self.cfg.staging().capacity_mb;
        let next_size = self.data.size(stream.entries[ws.next]);
        let mut start = avail;
        while ws.window_mb + next_size > capacity * (1.0 + 1e-12) {
            let Some((t_old, s_old)) = ws.window.pop_front() else { break };
            ws.window_mb -= s_old;
            start = start.max(t_old);
        }

        // Independent occupancy check at the chosen start time.
        while ws.resident.front().is_some_and(|&(t_old, _)| t_old <= start) {
            let (_, s_old) = ws.resident.pop_front().unwrap();
            ws.resident_mb -= s_old;
        }
        ws.resident.push_back((t, size));
        ws.resident_mb += size;
        // `t` itself may already be consumed by `start`.
        while ws.resident.front().is_some_and(|&(t_old, _)| t_old <= start) {
            let (_, s_old) = ws.resident.pop_front().unwrap();
            ws.resident_mb -= s_old;
        }
        let occupancy = ws.resident_mb + next_size;
        self.max_occupancy = self.max_occupancy.max(occupancy);
        if occupancy > capacity * (1.0 + 1e-9) {
            return Err(Error::invariant(format!(
                "staging buffer of worker {w} would hold {occupancy} MB > {capacity} MB"
            )));
        }
        Ok(Some(start))
    }

    fn prefetch(&mut self, w: usize, j: usize, now: f64) -> Option<f64> {
        let pf = &self.workers[w].prefetchers[j];
        let sample = pf.order[pf.next];
        let size = self.data.size(sample);
        let gamma = self.gamma(w, now);
        // Fill from another worker's copy or the PFS, whichever is faster.
        let copies: SmallVec<[Copy; 2]> =
            self.copies(sample, w, now).into_iter().filter(|c| c.worker != w).collect();
        let (src, fetch) = self.min_time(&copies, w, size, gamma, now, false);
        let threads = self.rates.threads[j] as f64;
        let done = now + (fetch + size / self.rates.write_share[j]) / threads;
        if src == FetchSource::Pfs {
            self.background_pfs_mb += size;
            self.workers[w].pfs_busy_until[j] = now + fetch / threads;
        }
        let pf = &mut self.workers[w].prefetchers[j];
        pf.completions.push(done);
        pf.busy_until = done;
        pf.next += 1;
        (pf.next < pf.order.len()).then_some(done)
    }
}

pub(super) fn run(cfg: &SystemConfig, data: &DatasetModel, policy: &Policy, options: SimOptions) -> Result<SimResult> {
    let n = cfg.workers;
    let classes = cfg.storage_classes.len();
    let locations = classes + 2;
    let rates = cfg.rates();
    let start = policy.phase_time_s;
    let epochs = policy.streams.iter().map(|s| s.epochs()).max().unwrap_or(0);

    let compute_bound = policy
        .streams
        .iter()
        .map(|s| s.entries.iter().map(|&k| data.size(k)).sum::<f64>() / cfg.compute_mbps)
        .fold(0.0, f64::max);

    let dynamic = match &policy.placement {
        Placement::FirstTouch { class } => Dynamic::FirstTouch {
            class: *class,
            holder: vec![None; data.samples()],
            free: vec![cfg.storage_classes.get(*class).map_or(0.0, |c| c.capacity_mb); n],
        },
        Placement::OwnerFill { owners } => Dynamic::OwnerFill {
            owners: owners.clone(),
            filled_at: vec![f64::INFINITY; data.samples()],
        },
        _ => Dynamic::None,
    };

    let workers = (0..n)
        .map(|w| WorkerState {
            next: 0,
            ready: start,
            window: VecDeque::new(),
            window_mb: 0.0,
            resident: VecDeque::new(),
            resident_mb: 0.0,
            pfs_busy_until: vec![f64::NEG_INFINITY; classes],
            prefetchers: (0..classes)
                .map(|j| Prefetcher {
                    order: match &policy.placement {
                        Placement::Prefetched(a) if j > 0 => a.orders[w][j].clone(),
                        _ => Vec::new(),
                    },
                    busy_until: f64::NEG_INFINITY,
                    ..Default::default()
                })
                .collect(),
            stall: 0.0,
            finish: start,
            timeline: Vec::new(),
            batch: 0,
            batch_start: start,
            batch_bytes: vec![0.0; locations],
        })
        .collect();

    let mut engine = Engine {
        cfg,
        data,
        policy,
        rates,
        options,
        workers,
        dynamic,
        loc_time: vec![0.0; locations],
        loc_bytes: vec![0.0; locations],
        background_pfs_mb: 0.0,
        false_positives: 0,
        max_occupancy: 0.0,
        epoch_end: vec![start; epochs],
        batches: Vec::new(),
    };

    if policy.pipeline == Pipeline::Ideal {
        run_ideal(&mut engine, start);
    } else {
        let mut heap = BinaryHeap::new();
        for w in 0..n {
            if !policy.streams[w].entries.is_empty() {
                heap.push(Reverse(Event { time: start, worker: w, pipe: STAGING }));
            }
            for j in 1..classes {
                if !engine.workers[w].prefetchers[j].order.is_empty() {
                    heap.push(Reverse(Event { time: 0.0, worker: w, pipe: j }));
                }
            }
        }
        while let Some(Reverse(ev)) = heap.pop() {
            let next = if ev.pipe == STAGING {
                engine.staging_fetch(ev.worker, ev.time)?
            } else {
                engine.prefetch(ev.worker, ev.pipe, ev.time)
            };
            if let Some(time) = next {
                heap.push(Reverse(Event { time, ..ev }));
            }
        }
    }

    Ok(finish(engine, compute_bound, epochs))
}

fn run_ideal(engine: &mut Engine<'_>, start: f64) {
    for (w, stream) in engine.policy.streams.iter().enumerate() {
        let ws = &mut engine.workers[w];
        let mut t = start;
        for (h, batch) in stream.batch_boundaries.windows(2).enumerate() {
            let batch_start = t;
            for f in batch[0]..batch[1] {
                if engine.options.record_timeline {
                    ws.timeline.push(t);
                }
                t += engine.data.size(stream.entries[f]) / engine.rates.compute_mbps;
                let e = stream.epoch_of(f);
                if stream.epoch_boundaries[e + 1] == f + 1 {
                    engine.epoch_end[e] = engine.epoch_end[e].max(t);
                }
            }
            if engine.options.record_batches {
                engine.batches.push(BatchRecord {
                    batch_index: h,
                    worker: w,
                    seconds: t - batch_start,
                    bytes_mb: vec![0.0; engine.loc_bytes.len()],
                });
            }
        }
        ws.finish = t;
    }
}

fn finish(engine: Engine<'_>, compute_bound: f64, epochs: usize) -> SimResult {
    let cfg = engine.cfg;
    let policy = engine.policy;
    let mut names: Vec<String> = cfg.storage_classes.iter().map(|c| c.name.clone()).collect();
    names[STAGING] = "staging".to_string();
    names.push("remote".to_string());
    names.push("pfs".to_string());

    let start = policy.phase_time_s;
    let total = engine.workers.iter().map(|w| w.finish).fold(start, f64::max);
    let mut epoch_times = Vec::with_capacity(epochs);
    let mut prev = start;
    for &end in &engine.epoch_end {
        epoch_times.push(end - prev);
        prev = end;
    }
    let steady = (epoch_times.len() > 1).then(|| epoch_times[1..].iter().sum::<f64>() / (epoch_times.len() - 1) as f64);
    let pfs_loc = names.len() - 1;
    let mut batches = engine.batches;
    batches.sort_by_key(|b| (b.batch_index, b.worker));

    SimResult {
        policy: policy.spec.name().to_string(),
        total_time_s: total,
        compute_bound_s: compute_bound,
        phase_time_s: start,
        stall_time_s: engine.workers.iter().map(|w| w.stall).collect(),
        epoch_end_s: engine.epoch_end.clone(),
        epoch0_time_s: epoch_times.first().copied().unwrap_or(0.0),
        steady_epoch_time_s: steady,
        fetch_time_s: engine.loc_time.iter().sum(),
        locations: names
            .into_iter()
            .zip(engine.loc_time.iter().zip(&engine.loc_bytes))
            .map(|(location, (&fetch_time_s, &bytes_mb))| LocationBreakdown { location, fetch_time_s, bytes_mb })
            .collect(),
        pfs_demand_mb: engine.loc_bytes[pfs_loc],
        pfs_total_mb: engine.loc_bytes[pfs_loc] + engine.background_pfs_mb + policy.phase_pfs_mb,
        order_modified: policy.order_modified,
        coverage: policy.coverage,
        false_positive_remote_requests: engine.false_positives,
        max_staging_occupancy_mb: engine.max_occupancy,
        batches,
        timeline: engine.workers.into_iter().map(|w| w.timeline).collect(),
    }
}
