#![allow(dead_code)]

use clairsim::perfmodel::{StorageClassSpec, ThroughputCurve};
use clairsim::SystemConfig;

pub fn constant(x: f64, mbps: f64) -> ThroughputCurve {
    ThroughputCurve::constant(x, mbps).unwrap()
}

pub fn class(name: &str, capacity_mb: f64, threads: u32, mbps: f64) -> StorageClassSpec {
    StorageClassSpec {
        name: name.into(),
        capacity_mb,
        read_curve: constant(threads as f64, mbps),
        write_curve: constant(threads as f64, mbps),
        threads,
    }
}

/// PFS whose per-reader share never grows with more readers.
pub fn saturating_pfs(single: f64, workers: usize) -> ThroughputCurve {
    let pts = (1..=workers.max(1)).map(|g| (g as f64, single * (1.0 + 0.5 * (g as f64 - 1.0)))).collect();
    ThroughputCurve::new(pts).unwrap()
}

/// A small cluster with optional RAM and SSD classes (capacity 0 = absent).
pub fn system(workers: usize, staging_mb: f64, ram_mb: f64, ssd_mb: f64) -> SystemConfig {
    let mut classes = vec![class("staging", staging_mb, 2, 20_000.0)];
    if ram_mb > 0.0 {
        classes.push(class("ram", ram_mb, 2, 10_000.0));
    }
    if ssd_mb > 0.0 {
        classes.push(class("ssd", ssd_mb, 2, 1_000.0));
    }
    SystemConfig {
        workers,
        compute_mbps: 50.0,
        preprocess_mbps: 400.0,
        network_mbps: 5_000.0,
        pfs_curve: saturating_pfs(40.0, workers),
        storage_classes: classes,
    }
}

/// Linear interpolation with flat extrapolation, written out independently.
pub fn lerp_curve(points: &[(f64, f64)], x: f64) -> f64 {
    if x <= points[0].0 {
        return points[0].1;
    }
    for w in points.windows(2) {
        if x <= w[1].0 {
            let t = (x - w[0].0) / (w[1].0 - w[0].0);
            return w[0].1 + t * (w[1].1 - w[0].1);
        }
    }
    points[points.len() - 1].1
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Consumption start times `t_{i,f}` for a staging-only system reading every
/// sample from the PFS with a buffer that never fills, evaluated directly:
/// `avail_i(f) = Σ_{k≤f} read_i(R_k) / p_0`, `t_{i,f} = max(avail_i(f), t_{i,f-1} + s/c)`.
/// The reader count is the number of other workers still transferring from
/// the PFS when a fetch starts.
pub fn recurrence_oracle(cfg: &SystemConfig, sizes: &[f64], streams: &[Vec<u32>]) -> Vec<Vec<f64>> {
    let n = streams.len();
    let pfs = cfg.pfs_curve.points().to_vec();
    let staging = &cfg.storage_classes[0];
    let p0 = staging.threads as f64;
    let w0 = lerp_curve(staging.write_curve.points(), p0) / p0;
    let mut read_sum = vec![0.0; n];
    let mut next = vec![0usize; n];
    let mut busy_until = vec![f64::NEG_INFINITY; n];
    let mut prev_end = vec![0.0; n];
    let mut t = vec![Vec::new(); n];
    loop {
        let mut pick: Option<usize> = None;
        for i in 0..n {
            if next[i] == streams[i].len() {
                continue;
            }
            if pick.is_none_or(|p| read_sum[i] / p0 < read_sum[p] / p0) {
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        let start = read_sum[i] / p0;
        let gamma = 1 + (0..n).filter(|&h| h != i && busy_until[h] > start).count();
        let s = sizes[streams[i][next[i]] as usize];
        let fetch = s / (lerp_curve(&pfs, gamma as f64) / gamma as f64);
        let write = (s / cfg.preprocess_mbps).max(s / w0);
        busy_until[i] = start + fetch / p0;
        read_sum[i] += fetch + write;
        let avail = read_sum[i] / p0;
        let tf = avail.max(prev_end[i]);
        t[i].push(tf);
        prev_end[i] = tf + s / cfg.compute_mbps;
        next[i] += 1;
    }
    t
}
