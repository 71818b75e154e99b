mod common;

use clairsim::access::{build_access_streams, AccessStream, PartitionSpec, Seed};
use clairsim::perfmodel::DatasetModel;
use clairsim::policies::{build_policy, PolicySpec};
use clairsim::{simulate, SimOptions, SimResult, SystemConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
struct Instance {
    cfg: SystemConfig,
    data: DatasetModel,
    streams: Vec<AccessStream>,
}

fn instance() -> impl Strategy<Value = Instance> {
    instance_with(1..=4)
}

fn instance_with(workers: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Instance> {
    (workers, 16usize..120, 1usize..=3, 1usize..=4, any::<u64>(), 0usize..3).prop_map(
        |(workers, samples, epochs, per_worker_batch, seed, shape)| {
            let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
            let sizes: Vec<f64> = (0..samples).map(|_| rng.random_range(0.2..4.0)).collect();
            let total: f64 = sizes.iter().sum();
            let (ram, ssd) = match shape {
                0 => (total / workers as f64 * 0.3, 0.0),
                1 => (total * 0.2, total * 0.5),
                _ => (total * 1.1, total * 1.1),
            };
            let staging = rng.random_range(8.0..40.0);
            let cfg = common::system(workers, staging, ram, ssd);
            let part = PartitionSpec { workers, global_batch: workers * per_worker_batch, epochs, drop_last: true };
            let streams = build_access_streams(Seed(seed), samples, &part).unwrap();
            Instance { cfg, data: DatasetModel::from_sizes(sizes), streams }
        },
    )
}

fn run(inst: &Instance, spec: &PolicySpec) -> Option<(clairsim::policies::Policy, SimResult)> {
    let policy = build_policy(spec, Seed(7), &inst.streams, &inst.cfg, &inst.data).ok()?;
    let r = simulate(&inst.cfg, &inst.data, &policy, SimOptions::default()).unwrap();
    Some((policy, r))
}

fn consumed_mb(data: &DatasetModel, streams: &[AccessStream]) -> f64 {
    streams.iter().flat_map(|s| &s.entries).map(|&k| data.size(k)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_policy_respects_the_basic_laws(inst in instance()) {
        let (_, perfect) = run(&inst, &PolicySpec::Perfect).unwrap();
        prop_assert_eq!(perfect.total_stall_s(), 0.0);
        for spec in PolicySpec::all() {
            let Some((policy, r)) = run(&inst, &spec) else { continue };
            let training = r.total_time_s - r.phase_time_s;
            prop_assert!(training >= r.compute_bound_s * (1.0 - 1e-12), "{}: {} < {}", spec, training, r.compute_bound_s);
            if spec.preserves_order() {
                prop_assert!(policy.streams == inst.streams, "{} changed the access order", spec);
                prop_assert!(r.total_time_s >= perfect.total_time_s * (1.0 - 1e-12));
            }
            prop_assert!(r.max_staging_occupancy_mb <= inst.cfg.storage_classes[0].capacity_mb + 1e-9);
            prop_assert!(r.stall_time_s.iter().all(|&s| s >= 0.0));

            // Every consumed byte is read from exactly one source and written once to staging.
            if spec != PolicySpec::Perfect {
                let consumed = consumed_mb(&inst.data, &policy.streams);
                let staged = r.location("staging").map_or(0.0, |l| l.bytes_mb);
                let sourced: f64 = r.locations.iter().filter(|l| l.location != "staging").map(|l| l.bytes_mb).sum();
                prop_assert!(common::rel_close(staged, consumed, 1e-9), "{}: staged {} consumed {}", spec, staged, consumed);
                prop_assert!(common::rel_close(sourced, consumed, 1e-9), "{}: sourced {} consumed {}", spec, sourced, consumed);
            }

            let again = simulate(&inst.cfg, &inst.data, &policy, SimOptions::default()).unwrap();
            prop_assert_eq!(&again, &r);
        }
    }

    #[test]
    fn nopfs_never_loses_to_naive(inst in instance()) {
        let (_, naive) = run(&inst, &PolicySpec::Naive).unwrap();
        let (_, nopfs) = run(&inst, &PolicySpec::Nopfs { heuristic_mode: false }).unwrap();
        prop_assert!(nopfs.total_time_s <= naive.total_time_s * (1.0 + 1e-12));
    }

    /// With a PFS whose per-reader share only shrinks under load, more cache
    /// never makes NoPFS slower. Single worker only: with several workers,
    /// cold-start cache fills compete with other workers' staging reads for
    /// the PFS and a bigger cache can cost a little.
    #[test]
    fn more_ram_never_hurts_nopfs(inst in instance_with(1..=1), steps in prop::collection::vec(0.0f64..1.0, 2..5)) {
        let total = inst.data.total_mb;
        let mut caps: Vec<f64> = steps.iter().map(|s| s * total).collect();
        caps.sort_by(f64::total_cmp);
        let mut prev = f64::INFINITY;
        for cap in caps {
            let mut cfg = common::system(inst.cfg.workers, inst.cfg.storage_classes[0].capacity_mb, cap, 0.0);
            cfg.pfs_curve = common::saturating_pfs(40.0, inst.cfg.workers);
            let i = Instance { cfg, ..inst.clone() };
            let (_, r) = run(&i, &PolicySpec::Nopfs { heuristic_mode: false }).unwrap();
            prop_assert!(r.total_time_s <= prev * (1.0 + 1e-9), "ram {}: {} > {}", cap, r.total_time_s, prev);
            prev = r.total_time_s;
        }
    }
}

/// One worker whose RAM holds the whole dataset reads nothing from the PFS
/// after the first epoch.
#[test]
fn single_worker_fully_cached_reads_pfs_once() {
    let samples = 64;
    let data = DatasetModel::from_sizes(vec![1.0; samples]);
    let mut cfg = common::system(1, 8.0, 100.0, 0.0);
    cfg.compute_mbps = 10.0;
    let part = PartitionSpec { workers: 1, global_batch: 4, epochs: 3, drop_last: true };
    let streams = build_access_streams(Seed(5), samples, &part).unwrap();
    let policy = build_policy(&PolicySpec::Nopfs { heuristic_mode: false }, Seed(5), &streams, &cfg, &data).unwrap();
    let r = simulate(&cfg, &data, &policy, SimOptions { record_batches: true, ..Default::default() }).unwrap();
    let pfs = r.locations.iter().position(|l| l.location == "pfs").unwrap();
    let s = &policy.streams[0];
    let mut later = 0.0;
    for b in &r.batches {
        if s.epoch_of(s.batch_boundaries[b.batch_index]) >= 1 {
            later += b.bytes_mb[pfs];
        }
    }
    assert_eq!(later, 0.0);
    assert!(r.pfs_demand_mb <= samples as f64);
}
