//! Policy simulation, parameter sweeps and scenario presets.

mod engine;
mod presets;
mod sweep;

use serde::Serialize;

pub use presets::{preset, scenario_library, Preset, PRESET_EPOCHS};
pub use sweep::{sweep, SweepAxis, SweepGrid, SweepPoint, SweepRow};

use crate::error::{Error, Result};
use crate::perfmodel::{DatasetModel, SystemConfig};
use crate::policies::Policy;

/// Optional detail recorded during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    /// Keep every `t_{i,f}` (consumption start time) per worker.
    pub record_timeline: bool,
    /// Keep per-batch durations and bytes.
    pub record_batches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationBreakdown {
    pub location: String,
    /// Summed read (or, for `staging`, preprocess-and-write) cost.
    pub fetch_time_s: f64,
    pub bytes_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRecord {
    pub batch_index: usize,
    pub worker: usize,
    pub seconds: f64,
    /// Bytes per location, in the order of [`SimResult::locations`].
    pub bytes_mb: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub policy: String,
    /// Finish time of the slowest worker, staging phase included.
    pub total_time_s: f64,
    /// `max_i Σ s/c`: the run time when I/O is free.
    pub compute_bound_s: f64,
    pub phase_time_s: f64,
    pub stall_time_s: Vec<f64>,
    /// Time at which the last worker finished each epoch.
    pub epoch_end_s: Vec<f64>,
    pub epoch0_time_s: f64,
    /// Mean duration of the epochs after the first.
    pub steady_epoch_time_s: Option<f64>,
    /// Sum of all location costs on the demand path.
    pub fetch_time_s: f64,
    pub locations: Vec<LocationBreakdown>,
    /// PFS bytes read by the staging pipes.
    pub pfs_demand_mb: f64,
    /// PFS bytes read in total, including cache fills and any staging phase.
    pub pfs_total_mb: f64,
    pub order_modified: bool,
    pub coverage: f64,
    pub false_positive_remote_requests: u64,
    pub max_staging_occupancy_mb: f64,
    #[serde(skip)]
    pub batches: Vec<BatchRecord>,
    #[serde(skip)]
    pub timeline: Vec<Vec<f64>>,
}

impl SimResult {
    pub fn total_stall_s(&self) -> f64 {
        self.stall_time_s.iter().sum()
    }

    pub fn location(&self, name: &str) -> Option<&LocationBreakdown> {
        self.locations.iter().find(|l| l.location == name)
    }

    /// Share of fetch cost spent at `name`.
    pub fn fraction(&self, name: &str) -> f64 {
        if self.fetch_time_s == 0.0 {
            return 0.0;
        }
        self.location(name).map_or(0.0, |l| l.fetch_time_s / self.fetch_time_s)
    }
}

/// Run one policy instance to completion.
pub fn simulate(cfg: &SystemConfig, data: &DatasetModel, policy: &Policy, options: SimOptions) -> Result<SimResult> {
    cfg.validate()?;
    if policy.streams.len() != cfg.workers {
        return Err(Error::config(format!(
            "policy has {} streams but the system has {} workers",
            policy.streams.len(),
            cfg.workers
        )));
    }
    if let Some(&k) = policy.streams.iter().flat_map(|s| s.entries.iter()).find(|&&k| k as usize >= data.samples()) {
        return Err(Error::config(format!("stream references sample {k} outside a dataset of {}", data.samples())));
    }
    let result = engine::run(cfg, data, policy, options)?;
    if result.total_time_s < result.compute_bound_s * (1.0 - 1e-12) {
        return Err(Error::invariant(format!(
            "total time {} s is below the compute bound {} s",
            result.total_time_s, result.compute_bound_s
        )));
    }
    Ok(result)
}
