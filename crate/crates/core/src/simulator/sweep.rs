//! Environment sweeps: one simulation per point of a cartesian grid.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::access::{AccessStream, Seed};
use crate::error::{Error, Result};
use crate::perfmodel::{DatasetModel, SystemConfig};
use crate::policies::{build_policy, PolicySpec};
use crate::units::SizeList;

use super::{simulate, SimOptions, SimResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    StagingMb,
    RamMb,
    SsdMb,
    /// Multiplies compute and preprocessing throughput.
    ComputeMultiplier,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::StagingMb => "staging_mb",
            SweepAxis::RamMb => "ram_mb",
            SweepAxis::SsdMb => "ssd_mb",
            SweepAxis::ComputeMultiplier => "compute_multiplier",
        }
    }

    /// Apply one coordinate to a system. Capacity 0 removes a cache class.
    pub fn apply(self, cfg: &mut SystemConfig, value: f64) -> Result<()> {
        match self {
            SweepAxis::StagingMb => {
                if !(value > 0.0) {
                    return Err(Error::config("staging buffer size must be positive"));
                }
                cfg.storage_classes[0].capacity_mb = value;
                Ok(())
            }
            SweepAxis::RamMb => set_or_remove(cfg, "ram", value),
            SweepAxis::SsdMb => set_or_remove(cfg, "ssd", value),
            SweepAxis::ComputeMultiplier => {
                if !(value > 0.0) {
                    return Err(Error::config("compute multiplier must be positive"));
                }
                cfg.apply_compute_multiplier(value);
                Ok(())
            }
        }
    }
}

fn set_or_remove(cfg: &mut SystemConfig, name: &str, value: f64) -> Result<()> {
    if value <= 0.0 && cfg.class_index(name).is_none() {
        return Ok(());
    }
    cfg.set_capacity(name, value)
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct SweepGrid {
    pub axes: BTreeMap<SweepAxis, SizeList>,
}

/// One grid coordinate, axes in canonical order.
pub type SweepPoint = Vec<(SweepAxis, f64)>;

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.values().any(|v| v.0.is_empty()) {
            return Err(Error::config("sweep grid is empty"));
        }
        if self.axes.values().flat_map(|v| v.0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::config("sweep grid values must be finite"));
        }
        Ok(())
    }

    /// Cartesian product, last axis varying fastest.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut points: Vec<SweepPoint> = vec![Vec::new()];
        for (&axis, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.0.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((axis, v));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub result: Option<SimResult>,
    pub error: Option<String>,
}

/// Simulate `spec` at every grid point in parallel. Failing points are
/// recorded in their row and do not stop the sweep.
pub fn sweep(
    base: &SystemConfig,
    data: &DatasetModel,
    streams: &[AccessStream],
    spec: &PolicySpec,
    seed: Seed,
    grid: &SweepGrid,
) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let rows = grid
        .points()
        .into_par_iter()
        .map(|point| {
            let outcome = (|| {
                let mut cfg = base.clone();
                for &(axis, v) in &point {
                    axis.apply(&mut cfg, v)?;
                }
                let policy = build_policy(spec, seed, streams, &cfg, data)?;
                simulate(&cfg, data, &policy, SimOptions::default())
            })();
            match outcome {
                Ok(r) => SweepRow { point, result: Some(r), error: None },
                Err(e) => SweepRow { point, result: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(rows)
}
