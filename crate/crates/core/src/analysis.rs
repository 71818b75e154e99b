//! Access-frequency analysis.
//!
//! Under full randomization a fixed worker sees a fixed sample in each epoch
//! independently with probability `1/N`, so its access count over `E` epochs
//! is `Binomial(E, 1/N)`. This module computes the tail of that distribution,
//! the expected number of "hot" samples, a Monte Carlo histogram built from
//! real generated streams, and the counterpart bounds that follow from every
//! sample being read exactly `E` times in total.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::access::{self, AccessStream, FrequencyTable, PartitionSpec, Seed};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessDistributionParams {
    pub workers: usize,
    pub epochs: usize,
    pub samples: usize,
    /// Relative excess over the mean count `E/N`.
    pub delta: f64,
}

impl AccessDistributionParams {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 || self.epochs == 0 {
            return Err(Error::config("workers and epochs must be at least 1"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::config(format!("delta must be finite and >= 0, got {}", self.delta)));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.epochs as f64 / self.workers as f64
    }
}

const SNAP: f64 = 1e-9;

/// Ceiling that treats values within rounding noise of an integer as that integer.
pub(crate) fn snapped_ceil(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= SNAP * r.abs().max(1.0) {
        r as i64
    } else {
        x.ceil() as i64
    }
}

pub(crate) fn snapped_floor(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= SNAP * r.abs().max(1.0) {
        r as i64
    } else {
        x.floor() as i64
    }
}

/// Smallest count that is "more than `(1+δ)` times the mean".
///
/// The sum starts at `ceil((1+δ)E/N)`, so a count exactly equal to an integral
/// `(1+δ)E/N` is included.
pub fn hot_threshold(params: &AccessDistributionParams) -> i64 {
    snapped_ceil((1.0 + params.delta) * params.mean())
}

fn ln_binomial_pmf(n: u64, k: u64, ln_p: f64, ln_q: f64) -> f64 {
    let (n_f, k_f) = (n as f64, k as f64);
    let ln_choose = ln_gamma(n_f + 1.0) - ln_gamma(k_f + 1.0) - ln_gamma(n_f - k_f + 1.0);
    // 0 * ln(0) terms are zero, not NaN.
    let a = if k == 0 { 0.0 } else { k_f * ln_p };
    let b = if k == n { 0.0 } else { (n_f - k_f) * ln_q };
    ln_choose + a + b
}

/// `P(X >= ceil((1+δ)E/N))` for `X ~ Binomial(E, 1/N)`, summed in log space.
pub fn prob_exceeds(params: &AccessDistributionParams) -> f64 {
    let e = params.epochs as u64;
    let k_min = hot_threshold(params).max(0) as u64;
    if k_min > e {
        return 0.0;
    }
    if params.workers == 1 {
        // X = E with certainty.
        return 1.0;
    }
    let p = 1.0 / params.workers as f64;
    let (ln_p, ln_q) = (p.ln(), (-p).ln_1p());
    let terms: Vec<f64> = (k_min..=e).map(|k| ln_binomial_pmf(e, k, ln_p, ln_q)).collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()).exp().clamp(0.0, 1.0)
}

/// Expected number of samples a worker reads more than `(1+δ)E/N` times.
pub fn expected_hot_samples(params: &AccessDistributionParams) -> f64 {
    if params.samples == 0 {
        return 0.0;
    }
    params.samples as f64 * prob_exceeds(params)
}

/// Expected number of samples per access count `0..=E` for one worker.
pub fn expected_histogram(params: &AccessDistributionParams) -> Vec<f64> {
    let e = params.epochs as u64;
    let f = params.samples as f64;
    if params.workers == 1 {
        let mut h = vec![0.0; params.epochs + 1];
        h[params.epochs] = f;
        return h;
    }
    let p = 1.0 / params.workers as f64;
    let (ln_p, ln_q) = (p.ln(), (-p).ln_1p());
    (0..=e).map(|k| f * ln_binomial_pmf(e, k, ln_p, ln_q).exp()).collect()
}

/// Number of samples per access count `0..=E` for one worker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyHistogram {
    pub buckets: Vec<u64>,
}

impl FrequencyHistogram {
    pub fn from_counts(counts: &[u32], epochs: usize) -> Self {
        let mut buckets = vec![0u64; epochs + 1];
        for &c in counts {
            buckets[c as usize] += 1;
        }
        Self { buckets }
    }

    pub fn total(&self) -> u64 {
        self.buckets.iter().sum()
    }

    /// Samples with count `>= threshold`.
    pub fn at_least(&self, threshold: usize) -> u64 {
        self.buckets.iter().skip(threshold).sum()
    }

    pub fn mean(&self) -> f64 {
        let weighted: f64 = self.buckets.iter().enumerate().map(|(c, &n)| c as f64 * n as f64).sum();
        weighted / self.total() as f64
    }
}

/// Histogram of worker 0's access counts, taken from a real generated stream.
///
/// Uses one sample per worker per iteration and keeps the last partial batch,
/// so every sample is read exactly `E` times across all workers.
pub fn monte_carlo_histogram(seed: Seed, params: &AccessDistributionParams) -> Result<FrequencyHistogram> {
    params.validate()?;
    let part = PartitionSpec {
        workers: params.workers,
        global_batch: params.workers,
        epochs: params.epochs,
        drop_last: false,
    };
    part.validate(params.samples)?;
    let mut counts = vec![0u32; params.samples];
    for perm in access::EpochPermutations::new(seed, params.samples).take(params.epochs) {
        for batch in perm.chunks(part.global_batch) {
            for &k in &batch[part.slice_of(0, batch.len())] {
                counts[k as usize] += 1;
            }
        }
    }
    Ok(FrequencyHistogram::from_counts(&counts, params.epochs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterpartBounds {
    /// A count at or above this makes the sample hot on that worker.
    pub high_threshold: i64,
    /// ...and then some other worker reads it at most this often.
    pub counterpart_low_bound: i64,
    /// A count at or below this makes the sample cold on that worker.
    pub low_threshold: i64,
    /// ...and then some other worker reads it at least this often.
    pub counterpart_high_bound: i64,
}

pub fn counterpart_bounds(workers: usize, epochs: usize, delta: f64) -> Result<CounterpartBounds> {
    if workers < 2 {
        return Err(Error::config("counterpart bounds need at least two workers"));
    }
    let n = workers as f64;
    if !(0.0..=n - 1.0).contains(&delta) {
        return Err(Error::config(format!("delta must lie in [0, {}], got {delta}", n - 1.0)));
    }
    let mean = epochs as f64 / n;
    Ok(CounterpartBounds {
        high_threshold: snapped_ceil((1.0 + delta) * mean),
        counterpart_low_bound: snapped_ceil((n - 1.0 - delta) / (n - 1.0) * mean),
        low_threshold: snapped_floor((1.0 - delta) * mean),
        counterpart_high_bound: snapped_floor((n - 1.0 + delta) / (n - 1.0) * mean),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CounterpartReport {
    pub samples_checked: u64,
    pub triggers: u64,
    pub violations: u64,
}

/// Check the counterpart bounds on every sample read exactly `E` times.
///
/// Any violation means the streams do not form a per-epoch partition.
pub fn check_counterparts(tables: &[FrequencyTable], epochs: usize, delta: f64) -> Result<CounterpartReport> {
    let bounds = counterpart_bounds(tables.len(), epochs, delta)?;
    let samples = tables.first().map_or(0, |t| t.counts.len());
    let mut report = CounterpartReport::default();
    let mut counts = vec![0i64; tables.len()];
    for k in 0..samples {
        for (c, t) in counts.iter_mut().zip(tables) {
            *c = t.counts[k] as i64;
        }
        if counts.iter().sum::<i64>() != epochs as i64 {
            continue;
        }
        report.samples_checked += 1;
        for (w, &c) in counts.iter().enumerate() {
            let others = counts.iter().enumerate().filter(|&(o, _)| o != w).map(|(_, &v)| v);
            if c >= bounds.high_threshold {
                report.triggers += 1;
                if others.clone().min().is_none_or(|m| m > bounds.counterpart_low_bound) {
                    report.violations += 1;
                }
            }
            if c <= bounds.low_threshold {
                report.triggers += 1;
                if others.max().is_none_or(|m| m < bounds.counterpart_high_bound) {
                    report.violations += 1;
                }
            }
        }
    }
    Ok(report)
}

/// Convenience: frequency tables of all workers over all epochs.
pub fn frequency_tables(streams: &[AccessStream], samples: usize) -> Vec<FrequencyTable> {
    streams
        .iter()
        .map(|s| access::access_frequencies(s, samples, 0..s.epochs()))
        .collect()
}
