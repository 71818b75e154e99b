//! Run configuration documents.
//!
//! A [`RunConfig`] names a preset or spells out the system and dataset, picks
//! a policy and fixes the seed. [`RunConfig::normalize`] resolves the preset
//! and folds the scale factor and compute multiplier into explicit values, so
//! a normalized document describes the run completely and re-normalizes to
//! itself.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::access::{build_access_streams, AccessStream, PartitionSpec, Seed};
use crate::error::{Error, Result};
use crate::perfmodel::{DatasetModel, DatasetSpec, SystemConfig};
use crate::policies::{build_policy, check_feasibility, Policy, PolicySpec};
use crate::simulator::{preset, SimOptions, SimResult, PRESET_EPOCHS};

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_policy() -> PolicySpec {
    PolicySpec::Nopfs { heuristic_mode: false }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Overrides the preset's system when both are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSpec>,
    #[serde(default = "default_policy")]
    pub policy: PolicySpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Global mini-batch size (all workers together).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default = "yes")]
    pub drop_last: bool,
    /// Shrinks sample count, dataset size and every capacity together.
    #[serde(default = "one")]
    pub scale: f64,
    /// Multiplies compute and preprocessing throughput.
    #[serde(default = "one")]
    pub compute_multiplier: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            preset: None,
            system: None,
            dataset: None,
            policy: default_policy(),
            seed: 0,
            epochs: None,
            batch_size: None,
            drop_last: true,
            scale: 1.0,
            compute_multiplier: 1.0,
        }
    }
}

impl RunConfig {
    pub fn from_preset(name: &str, policy: PolicySpec, seed: u64) -> Self {
        Self { preset: Some(name.to_string()), policy, seed, ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::config(format!("invalid run config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    /// Resolve the preset, apply scale and compute multiplier, and validate.
    pub fn normalize(&self) -> Result<RunConfig> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::config(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.compute_multiplier > 0.0 && self.compute_multiplier.is_finite()) {
            return Err(Error::config(format!(
                "compute_multiplier must be positive, got {}",
                self.compute_multiplier
            )));
        }
        let base = self.preset.as_deref().map(preset).transpose()?;
        let mut system = self
            .system
            .clone()
            .or_else(|| base.as_ref().map(|p| p.system.clone()))
            .ok_or_else(|| Error::config("run config needs a preset or a system"))?;
        let mut dataset = self
            .dataset
            .clone()
            .or_else(|| base.as_ref().map(|p| p.dataset.clone()))
            .ok_or_else(|| Error::config("run config needs a preset or a dataset"))?;
        let epochs = self.epochs.or(base.as_ref().map(|p| p.epochs)).unwrap_or(PRESET_EPOCHS);
        let batch_size = self
            .batch_size
            .or_else(|| base.as_ref().map(|p| p.per_worker_batch * system.workers))
            .ok_or_else(|| Error::config("run config needs batch_size when no preset is given"))?;

        if self.scale != 1.0 {
            dataset = dataset.scaled(self.scale);
            system.scale_capacities(self.scale);
        }
        if self.compute_multiplier != 1.0 {
            system.apply_compute_multiplier(self.compute_multiplier);
        }
        system.validate()?;
        dataset.validate()?;
        PartitionSpec { workers: system.workers, global_batch: batch_size, epochs, drop_last: self.drop_last }
            .validate(dataset.samples)?;

        Ok(RunConfig {
            schema_version: SCHEMA_VERSION,
            preset: None,
            system: Some(system),
            dataset: Some(dataset),
            policy: self.policy.clone(),
            seed: self.seed,
            epochs: Some(epochs),
            batch_size: Some(batch_size),
            drop_last: self.drop_last,
            scale: 1.0,
            compute_multiplier: 1.0,
        })
    }

    /// Materialize sizes and check policy feasibility, without building streams.
    pub fn prepare(&self) -> Result<PreparedRun> {
        let n = self.normalize()?;
        let system = n.system.expect("normalized");
        let dataset = n.dataset.expect("normalized");
        let data = dataset.materialize()?;
        check_feasibility(&n.policy, &system, data.total_mb)?;
        Ok(PreparedRun {
            partition: PartitionSpec {
                workers: system.workers,
                global_batch: n.batch_size.expect("normalized"),
                epochs: n.epochs.expect("normalized"),
                drop_last: n.drop_last,
            },
            system,
            dataset,
            data,
            policy: n.policy,
            seed: Seed(n.seed),
        })
    }
}

/// A validated run with materialized sample sizes.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub system: SystemConfig,
    pub dataset: DatasetSpec,
    pub data: DatasetModel,
    pub partition: PartitionSpec,
    pub policy: PolicySpec,
    pub seed: Seed,
}

impl PreparedRun {
    pub fn streams(&self) -> Result<Vec<AccessStream>> {
        build_access_streams(self.seed, self.data.samples(), &self.partition)
    }

    pub fn build_policy(&self, spec: &PolicySpec, streams: &[AccessStream]) -> Result<Policy> {
        build_policy(spec, self.seed, streams, &self.system, &self.data)
    }

    /// Build streams and the policy, then simulate.
    pub fn simulate(&self, options: SimOptions) -> Result<SimResult> {
        let streams = self.streams()?;
        let policy = self.build_policy(&self.policy, &streams)?;
        crate::simulator::simulate(&self.system, &self.data, &policy, options)
    }
}
