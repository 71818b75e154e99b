#![allow(clippy::needless_range_loop)]

mod common;

use clairsim::access::{build_access_streams, AccessStream, PartitionSpec, Seed};
use clairsim::analysis::frequency_tables;
use clairsim::perfmodel::DatasetModel;
use clairsim::policies::{
    first_access_positions, nopfs_assign_caches, nopfs_choose_source, CacheAssignment, FetchSource, Pipeline,
    Placement, Policy, PolicySpec, PrefetchProgress, SourceRule,
};
use clairsim::{simulate, SimOptions};
use proptest::prelude::*;

fn streams(seed: u64, workers: usize, samples: usize, epochs: usize) -> Vec<AccessStream> {
    let part = PartitionSpec { workers, global_batch: workers, epochs, drop_last: false };
    build_access_streams(Seed(seed), samples, &part).unwrap()
}

/// Best achievable sum of access counts over all subsets of at most `slots` samples.
fn exhaustive_best(counts: &[u32], slots: usize) -> u64 {
    let f = counts.len();
    let mut best = 0u64;
    for mask in 0u32..(1 << f) {
        if mask.count_ones() as usize > slots {
            continue;
        }
        let sum: u64 = (0..f).filter(|&k| mask >> k & 1 == 1).map(|k| counts[k] as u64).sum();
        best = best.max(sum);
    }
    best
}

#[test]
fn greedy_assignment_matches_exhaustive_optimum() {
    for seed in 0..40u64 {
        let samples = 6 + (seed as usize % 7);
        let workers = 2 + (seed as usize % 3);
        let st = streams(seed, workers, samples, 5);
        let data = DatasetModel::from_sizes(vec![1.0; samples]);
        let slots = 1 + seed as usize % 5;
        let cfg = common::system(workers, 10.0, slots as f64, 0.0);
        let freqs = frequency_tables(&st, samples);
        let a = nopfs_assign_caches(&freqs, &st, &cfg, &data);
        for (w, table) in freqs.iter().enumerate() {
            let chosen: u64 = a.orders[w][1].iter().map(|&k| table.counts[k as usize] as u64).sum();
            assert_eq!(chosen, exhaustive_best(&table.counts, slots), "seed {seed} worker {w}");
        }
    }
}

#[test]
fn ten_hottest_samples_in_ram() {
    let st = streams(3, 4, 100, 3);
    let data = DatasetModel::from_sizes(vec![1.0; 100]);
    let cfg = common::system(4, 10.0, 10.0, 0.0);
    let freqs = frequency_tables(&st, 100);
    let a = nopfs_assign_caches(&freqs, &st, &cfg, &data);
    for (w, table) in freqs.iter().enumerate() {
        let first = first_access_positions(&st[w], 100);
        let chosen = &a.orders[w][1];
        assert_eq!(chosen.len(), 10);
        let min_in = chosen.iter().map(|&k| table.counts[k as usize]).min().unwrap();
        let max_out = (0..100u32)
            .filter(|k| !chosen.contains(k))
            .map(|k| table.counts[k as usize])
            .max()
            .unwrap();
        assert!(min_in >= max_out, "worker {w}: kept {min_in}, dropped {max_out}");
        // Equal counts: the earlier first access wins.
        for &k in chosen {
            for j in (0..100u32).filter(|j| !chosen.contains(j)) {
                if table.counts[j as usize] == table.counts[k as usize] {
                    assert!(first[k as usize] < first[j as usize]);
                }
            }
        }
        // Prefetch order follows first access.
        assert!(chosen.windows(2).all(|p| first[p[0] as usize] < first[p[1] as usize]));
    }
}

#[test]
fn cached_nowhere_reads_pfs_and_remote_ssd_beats_pfs() {
    let cfg = clairsim::simulator::preset("imagenet1k").unwrap().system;
    let data = DatasetModel::from_sizes(vec![0.1077; 4]);
    let mut orders = vec![vec![Vec::new(); 3]; 4];
    orders[2][2] = vec![1];
    let a = CacheAssignment::new(orders, 4);
    let mut progress = PrefetchProgress::none(4, 3);
    progress.per_worker[2][2] = 1;
    assert_eq!(nopfs_choose_source(0, 0, &a, &progress, 4, &cfg, &data), FetchSource::Pfs);
    assert_eq!(nopfs_choose_source(1, 0, &a, &progress, 4, &cfg, &data), FetchSource::Remote { worker: 2, class: 2 });
}

/// Workers, per-sample holders, per-worker progress, sample, requester, size.
type ChooserCase = (usize, Vec<Vec<(usize, usize)>>, Vec<Vec<usize>>, usize, usize, f64);

fn assignment_strategy() -> impl Strategy<Value = ChooserCase> {
    (2usize..5, 1usize..6).prop_flat_map(|(workers, samples)| {
        (
            Just(workers),
            // For each sample: a set of (worker, class) holders.
            prop::collection::vec(prop::collection::vec((0..workers, 1usize..3), 0..4), samples),
            prop::collection::vec(prop::collection::vec(0usize..4, 3), workers),
            0..samples,
            0..workers,
            0.001f64..50.0,
        )
    })
}

proptest! {
    #[test]
    fn chooser_is_the_argmin((workers, holders, prog, sample, requester, size) in assignment_strategy(),
                             gamma in 1usize..6, net in 100.0f64..50_000.0) {
        let samples = holders.len();
        let mut cfg = common::system(workers, 100.0, 100.0, 100.0);
        cfg.network_mbps = net;
        cfg.pfs_curve = clairsim::perfmodel::ThroughputCurve::new(vec![(1.0, 330.0), (2.0, 730.0), (4.0, 1540.0)]).unwrap();
        let mut orders = vec![vec![Vec::new(); 3]; workers];
        for (k, hs) in holders.iter().enumerate() {
            let mut used = vec![false; workers];
            for &(w, j) in hs {
                if !used[w] {
                    used[w] = true;
                    orders[w][j].push(k as u32);
                }
            }
        }
        let a = CacheAssignment::new(orders.clone(), samples);
        let mut progress = PrefetchProgress::none(workers, 3);
        for w in 0..workers {
            for j in 1..3 {
                progress.per_worker[w][j] = prog[w][j].min(orders[w][j].len());
            }
        }
        let data = DatasetModel::from_sizes(vec![size; samples]);
        let got = nopfs_choose_source(sample as u32, requester, &a, &progress, gamma, &cfg, &data);

        // Oracle: list every available source with its cost, in preference order.
        let rate = |j: usize| common::lerp_curve(cfg.storage_classes[j].read_curve.points(), cfg.storage_classes[j].threads as f64)
            / cfg.storage_classes[j].threads as f64;
        let mut candidates: Vec<(FetchSource, f64)> = Vec::new();
        for j in 1..3 {
            if let Some(pos) = orders[requester][j].iter().position(|&k| k as usize == sample) {
                if pos < progress.per_worker[requester][j] {
                    candidates.push((FetchSource::Local { class: j }, size / rate(j)));
                }
            }
        }
        for w in (0..workers).filter(|&w| w != requester) {
            for j in 1..3 {
                if let Some(pos) = orders[w][j].iter().position(|&k| k as usize == sample) {
                    if pos < progress.per_worker[w][j] {
                        candidates.push((FetchSource::Remote { worker: w, class: j }, size / rate(j).min(net)));
                    }
                }
            }
        }
        let g = gamma as f64;
        candidates.push((FetchSource::Pfs, size / (common::lerp_curve(cfg.pfs_curve.points(), g) / g)));
        let best = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let expected = candidates.iter().find(|c| c.1 == best).unwrap().0;
        prop_assert_eq!(got, expected);
    }
}

/// Worker 0 caches four large samples, worker 1 four tiny ones. Worker 1
/// soon asks for worker 0's first sample; its own prefetcher is far ahead, so
/// the progress proxy wrongly claims worker 0 has it.
#[test]
fn heuristic_availability_produces_false_positives_on_skewed_sizes() {
    let mut sizes = vec![100.0; 4];
    sizes.extend([0.01; 4]);
    let data = DatasetModel::from_sizes(sizes);
    let cfg = common::system(2, 1000.0, 1000.0, 0.0);
    let stream = |w: usize, entries: Vec<u32>| AccessStream {
        worker_id: w,
        epoch_boundaries: vec![0, entries.len()],
        batch_boundaries: vec![0, entries.len()],
        entries,
    };
    let streams = vec![stream(0, vec![0, 1, 2, 3, 4, 5, 6, 7]), stream(1, vec![4, 5, 6, 7, 0, 1, 2, 3])];
    let mut orders = vec![vec![Vec::new(); 2]; 2];
    orders[0][1] = vec![0, 1, 2, 3];
    orders[1][1] = vec![4, 5, 6, 7];
    let a = CacheAssignment::new(orders, 8);
    let policy = |heuristic_mode: bool| Policy {
        spec: PolicySpec::Nopfs { heuristic_mode },
        streams: streams.clone(),
        order_modified: false,
        coverage: 1.0,
        pipeline: Pipeline::Staged,
        sources: SourceRule::MinTime,
        placement: Placement::Prefetched(a.clone()),
        phase_time_s: 0.0,
        phase_pfs_mb: 0.0,
        heuristic_mode,
    };
    let exact = simulate(&cfg, &data, &policy(false), SimOptions::default()).unwrap();
    let guessed = simulate(&cfg, &data, &policy(true), SimOptions::default()).unwrap();
    assert_eq!(exact.false_positive_remote_requests, 0);
    assert!(guessed.false_positive_remote_requests > 0);
    // Wrong guesses fall back to exact information, so nothing is read from a
    // copy that does not exist yet: byte totals match.
    let bytes = |r: &clairsim::SimResult| r.locations.iter().filter(|l| l.location != "staging").map(|l| l.bytes_mb).sum::<f64>();
    assert!((bytes(&exact) - bytes(&guessed)).abs() < 1e-9);
}
