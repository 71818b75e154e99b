//! System and dataset model plus the per-sample cost formulas.
//!
//! Units: sizes in MB, rates in MB/s, times in seconds.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize};

use crate::access::{self, Purpose, Seed};
use crate::error::{Error, Result};
use crate::units;

/// Aggregate throughput as a function of the number of concurrent clients or threads.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ThroughputCurve {
    points: Vec<(f64, f64)>,
}

impl ThroughputCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::config("throughput curve needs at least one point"));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::config("throughput curve x values must be strictly increasing"));
            }
        }
        if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
            return Err(Error::config("throughput curve points must be positive and finite"));
        }
        Ok(Self { points })
    }

    pub fn constant(x: f64, mbps: f64) -> Result<Self> {
        Self::new(vec![(x, mbps)])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Piecewise-linear between knots, clamped to the end values outside them.
    pub fn interp(&self, x: f64) -> f64 {
        let pts = &self.points;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if x <= first.0 {
            return first.1;
        }
        if x >= last.0 {
            return last.1;
        }
        let i = pts.partition_point(|p| p.0 <= x);
        let (x0, y0) = pts[i - 1];
        let (x1, y1) = pts[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

impl<'de> Deserialize<'de> for ThroughputCurve {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Point(f64, #[serde(deserialize_with = "units::de_rate_mbps")] f64);
        let pts = Vec::<Point>::deserialize(d)?;
        ThroughputCurve::new(pts.into_iter().map(|Point(x, y)| (x, y)).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// `interp` as a free function over a curve.
pub fn interp(curve: &ThroughputCurve, x: f64) -> f64 {
    curve.interp(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageClassSpec {
    pub name: String,
    #[serde(rename = "capacity_mb", alias = "capacity", deserialize_with = "units::de_size_mb")]
    pub capacity_mb: f64,
    pub read_curve: ThroughputCurve,
    pub write_curve: ThroughputCurve,
    /// Prefetcher threads for this class.
    pub threads: u32,
}

impl StorageClassSpec {
    /// Per-thread read rate `r_j(p_j)/p_j`.
    pub fn read_share(&self) -> f64 {
        self.read_curve.interp(self.threads as f64) / self.threads as f64
    }

    /// Per-thread write rate `w_j(p_j)/p_j`.
    pub fn write_share(&self) -> f64 {
        self.write_curve.interp(self.threads as f64) / self.threads as f64
    }
}

/// Hardware description. `storage_classes[0]` is the staging buffer; the rest
/// are ordered fastest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub workers: usize,
    #[serde(rename = "compute_mbps", alias = "compute", deserialize_with = "units::de_rate_mbps")]
    pub compute_mbps: f64,
    #[serde(rename = "preprocess_mbps", alias = "preprocess", deserialize_with = "units::de_rate_mbps")]
    pub preprocess_mbps: f64,
    #[serde(rename = "network_mbps", alias = "network", deserialize_with = "units::de_rate_mbps")]
    pub network_mbps: f64,
    pub pfs_curve: ThroughputCurve,
    pub storage_classes: Vec<StorageClassSpec>,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("system needs at least one worker"));
        }
        for (name, v) in [
            ("compute_mbps", self.compute_mbps),
            ("preprocess_mbps", self.preprocess_mbps),
            ("network_mbps", self.network_mbps),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.storage_classes.is_empty() {
            return Err(Error::config("storage class 0 (staging buffer) is required"));
        }
        for c in &self.storage_classes {
            if !(c.capacity_mb > 0.0 && c.capacity_mb.is_finite()) {
                return Err(Error::config(format!("storage class '{}' needs a positive capacity", c.name)));
            }
            if c.threads == 0 {
                return Err(Error::config(format!("storage class '{}' needs at least one thread", c.name)));
            }
        }
        for w in self.storage_classes[1..].windows(2) {
            if w[1].read_share() > w[0].read_share() {
                return Err(Error::config(format!(
                    "storage classes must be ordered fastest first: '{}' ({} MB/s per thread) precedes '{}' ({} MB/s)",
                    w[0].name,
                    w[0].read_share(),
                    w[1].name,
                    w[1].read_share()
                )));
            }
        }
        let mut names: Vec<&str> = self.storage_classes.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("storage class names must be unique"));
        }
        Ok(())
    }

    pub fn staging(&self) -> &StorageClassSpec {
        &self.storage_classes[0]
    }

    /// Local storage classes below the staging buffer.
    pub fn cache_classes(&self) -> &[StorageClassSpec] {
        &self.storage_classes[1..]
    }

    /// Total local cache capacity `D` of one worker.
    pub fn local_capacity_mb(&self) -> f64 {
        self.cache_classes().iter().map(|c| c.capacity_mb).sum()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.storage_classes.iter().position(|c| c.name == name)
    }

    /// Multiply every capacity (staging included) by `factor`.
    pub fn scale_capacities(&mut self, factor: f64) {
        for c in &mut self.storage_classes {
            c.capacity_mb *= factor;
        }
    }

    /// Faster accelerators: scale compute and preprocessing throughput together.
    pub fn apply_compute_multiplier(&mut self, factor: f64) {
        self.compute_mbps *= factor;
        self.preprocess_mbps *= factor;
    }

    /// Set a class capacity by name; zero removes a cache class entirely.
    pub fn set_capacity(&mut self, name: &str, capacity_mb: f64) -> Result<()> {
        let j = self
            .class_index(name)
            .ok_or_else(|| Error::config(format!("no storage class named '{name}'")))?;
        if capacity_mb <= 0.0 {
            if j == 0 {
                return Err(Error::config("the staging buffer cannot be removed"));
            }
            self.storage_classes.remove(j);
        } else {
            self.storage_classes[j].capacity_mb = capacity_mb;
        }
        Ok(())
    }

    pub fn rates(&self) -> Rates {
        Rates::new(self)
    }
}

/// Time to preprocess a sample and write it into the staging buffer.
pub fn write_time(size_mb: f64, cfg: &SystemConfig) -> f64 {
    (size_mb / cfg.preprocess_mbps).max(size_mb / cfg.staging().write_share())
}

/// PFS read while `gamma - 1` other workers also read from it.
pub fn fetch_time_pfs(size_mb: f64, cfg: &SystemConfig, gamma: usize) -> Result<f64> {
    if gamma == 0 {
        return Err(Error::config("PFS fetch needs at least one reader"));
    }
    let g = gamma as f64;
    Ok(size_mb / (cfg.pfs_curve.interp(g) / g))
}

/// Read from storage class `class` of another worker.
pub fn fetch_time_remote(size_mb: f64, cfg: &SystemConfig, class: usize) -> f64 {
    size_mb / cfg.network_mbps.min(cfg.storage_classes[class].read_share())
}

/// Read from the worker's own storage class `class`.
pub fn fetch_time_local(size_mb: f64, cfg: &SystemConfig, class: usize) -> f64 {
    size_mb / cfg.storage_classes[class].read_share()
}

/// Precomputed per-MB costs for the simulator's inner loop.
#[derive(Debug, Clone)]
pub struct Rates {
    /// `pfs_share[g]` = `t(g)/g` for `g` in `1..=workers`; index 0 unused.
    pub pfs_share: Vec<f64>,
    pub local_share: Vec<f64>,
    pub remote_share: Vec<f64>,
    pub write_share: Vec<f64>,
    pub threads: Vec<u32>,
    pub compute_mbps: f64,
    pub write_cost_per_mb: f64,
}

impl Rates {
    fn new(cfg: &SystemConfig) -> Self {
        let pfs_share = (0..=cfg.workers)
            .map(|g| if g == 0 { f64::NAN } else { cfg.pfs_curve.interp(g as f64) / g as f64 })
            .collect();
        let local_share: Vec<f64> = cfg.storage_classes.iter().map(|c| c.read_share()).collect();
        Rates {
            pfs_share,
            remote_share: local_share.iter().map(|&r| r.min(cfg.network_mbps)).collect(),
            local_share,
            write_share: cfg.storage_classes.iter().map(|c| c.write_share()).collect(),
            threads: cfg.storage_classes.iter().map(|c| c.threads).collect(),
            compute_mbps: cfg.compute_mbps,
            write_cost_per_mb: (1.0 / cfg.preprocess_mbps).max(1.0 / cfg.staging().write_share()),
        }
    }

    pub fn pfs(&self, size_mb: f64, gamma: usize) -> f64 {
        size_mb / self.pfs_share[gamma.min(self.pfs_share.len() - 1)]
    }

    pub fn write(&self, size_mb: f64) -> f64 {
        size_mb * self.write_cost_per_mb
    }
}

/// Parameters of a synthetic dataset with normally distributed sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub samples: usize,
    #[serde(rename = "mean_mb", alias = "mean", deserialize_with = "units::de_size_mb")]
    pub mean_mb: f64,
    #[serde(rename = "stddev_mb", alias = "stddev", deserialize_with = "units::de_size_mb")]
    pub stddev_mb: f64,
    /// Interpret `stddev_mb` as a coefficient of variation instead of MB.
    #[serde(default)]
    pub sigma_relative: bool,
    /// Rescale sizes so they sum to this total.
    #[serde(
        rename = "total_mb",
        alias = "total",
        default,
        deserialize_with = "units::de_opt_size_mb",
        skip_serializing_if = "Option::is_none"
    )]
    pub total_mb: Option<f64>,
    #[serde(default)]
    pub size_seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("dataset must contain at least one sample"));
        }
        if u32::try_from(self.samples).is_err() {
            return Err(Error::config("dataset sample count must fit in 32 bits"));
        }
        if !(self.mean_mb > 0.0) || !(self.stddev_mb >= 0.0) {
            return Err(Error::config("dataset needs mean > 0 and stddev >= 0"));
        }
        if let Some(t) = self.total_mb {
            if !(t > 0.0) {
                return Err(Error::config("dataset total size must be positive"));
            }
        }
        Ok(())
    }

    /// Dataset size `S` without materializing the sizes.
    pub fn nominal_total_mb(&self) -> f64 {
        self.total_mb.unwrap_or(self.samples as f64 * self.mean_mb)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut d = self.clone();
        d.samples = ((self.samples as f64 * factor).round() as usize).max(1);
        d.total_mb = self.total_mb.map(|t| t * factor);
        d
    }

    pub fn materialize(&self) -> Result<DatasetModel> {
        self.validate()?;
        let sigma = if self.sigma_relative { self.stddev_mb * self.mean_mb } else { self.stddev_mb };
        let sizes = generate_sizes(self.samples, self.mean_mb, sigma, self.total_mb, Seed(self.size_seed));
        Ok(DatasetModel::from_sizes(sizes))
    }
}

/// Materialized per-sample sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetModel {
    pub sizes: Vec<f64>,
    pub total_mb: f64,
}

impl DatasetModel {
    pub fn from_sizes(sizes: Vec<f64>) -> Self {
        let total_mb = sizes.iter().sum();
        Self { sizes, total_mb }
    }

    pub fn samples(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, k: u32) -> f64 {
        self.sizes[k as usize]
    }
}

/// Lower truncation point for generated sizes: 1 KB or 1% of the mean.
pub fn size_floor_mb(mean_mb: f64) -> f64 {
    (1e-3f64).max(mean_mb / 100.0)
}

/// Normal sizes truncated below (by rejection), optionally rescaled to `total_mb`.
pub fn generate_sizes(samples: usize, mean_mb: f64, sigma_mb: f64, total_mb: Option<f64>, seed: Seed) -> Vec<f64> {
    let mut sizes = if sigma_mb == 0.0 {
        vec![mean_mb; samples]
    } else {
        let floor = size_floor_mb(mean_mb);
        let normal = Normal::new(mean_mb, sigma_mb).expect("sigma is finite and positive");
        let mut rng = access::stream_rng(seed, Purpose::SampleSizes, 0);
        (0..samples)
            .map(|_| loop {
                let v = normal.sample(&mut rng);
                if v >= floor {
                    break v;
                }
            })
            .collect()
    };
    if let Some(target) = total_mb {
        let sum: f64 = sizes.iter().sum();
        let factor = target / sum;
        for s in &mut sizes {
            *s *= factor;
        }
    }
    sizes
}
