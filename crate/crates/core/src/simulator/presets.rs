//! Reference cluster and dataset presets.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::perfmodel::{DatasetSpec, StorageClassSpec, SystemConfig, ThroughputCurve};

/// Epoch count used when a run does not set one.
pub const PRESET_EPOCHS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub system: SystemConfig,
    pub dataset: DatasetSpec,
    pub per_worker_batch: usize,
    pub epochs: usize,
}

impl Preset {
    pub fn global_batch(&self) -> usize {
        self.per_worker_batch * self.system.workers
    }
}

fn curve(x: f64, mbps: f64) -> ThroughputCurve {
    ThroughputCurve::constant(x, mbps).expect("preset curve is valid")
}

fn class(name: &str, capacity_mb: f64, threads: u32, mbps: f64) -> StorageClassSpec {
    StorageClassSpec {
        name: name.to_string(),
        capacity_mb,
        read_curve: curve(threads as f64, mbps),
        write_curve: curve(threads as f64, mbps),
        threads,
    }
}

/// Small cluster: 5 GB staging buffer, 120 GB RAM, 900 GB SSD per worker.
pub fn reference_system(workers: usize) -> SystemConfig {
    SystemConfig {
        workers,
        compute_mbps: 64.0,
        preprocess_mbps: 200.0,
        network_mbps: 24_000.0,
        pfs_curve: ThroughputCurve::new(vec![(1.0, 330.0), (2.0, 730.0), (4.0, 1540.0), (8.0, 2870.0)])
            .expect("preset curve is valid"),
        storage_classes: vec![
            class("staging", 5_000.0, 8, 111_000.0),
            class("ram", 120_000.0, 4, 85_000.0),
            class("ssd", 900_000.0, 2, 4_000.0),
        ],
    }
}

fn dataset(samples: usize, mean_mb: f64, stddev_mb: f64, total_mb: f64) -> DatasetSpec {
    DatasetSpec {
        samples,
        mean_mb,
        stddev_mb,
        sigma_relative: false,
        total_mb: Some(total_mb),
        size_seed: 0,
    }
}

/// All presets, in scenario order.
pub fn scenario_library() -> Vec<Preset> {
    let four = reference_system(4);
    vec![
        Preset {
            name: "mnist",
            description: "small dataset that fits in RAM (50,000 x 0.76 KB, 40 MB)",
            system: four.clone(),
            dataset: dataset(50_000, 0.00076, 0.0, 40.0),
            per_worker_batch: 32,
            epochs: PRESET_EPOCHS,
        },
        Preset {
            name: "imagenet1k",
            description: "larger than RAM, fits in RAM+SSD (1,281,167 samples, 135 GB)",
            system: four.clone(),
            dataset: dataset(1_281_167, 0.1077, 0.1, 135_000.0),
            per_worker_batch: 32,
            epochs: PRESET_EPOCHS,
        },
        Preset {
            name: "openimages",
            description: "larger than RAM, fits in RAM+SSD (1,743,042 samples, 500 GB)",
            system: four.clone(),
            dataset: dataset(1_743_042, 0.2937, 0.2, 500_000.0),
            per_worker_batch: 32,
            epochs: PRESET_EPOCHS,
        },
        Preset {
            name: "imagenet22k",
            description: "larger than one worker's storage (14,197,122 samples, 1.5 TB)",
            system: four.clone(),
            dataset: dataset(14_197_122, 0.1077, 0.2, 1_500_000.0),
            per_worker_batch: 32,
            epochs: PRESET_EPOCHS,
        },
        Preset {
            name: "cosmoflow",
            description: "larger than the cluster's storage (262,144 x 17 MB, 4 TB)",
            system: four,
            dataset: dataset(262_144, 17.0, 0.0, 4_000_000.0),
            per_worker_batch: 16,
            epochs: PRESET_EPOCHS,
        },
        Preset {
            name: "cosmoflow512",
            description: "8 workers, few very large samples (10,000 x 1 GB, 10 TB)",
            system: reference_system(8),
            dataset: dataset(10_000, 1000.0, 0.0, 10_000_000.0),
            per_worker_batch: 1,
            epochs: PRESET_EPOCHS,
        },
    ]
}

pub fn preset(name: &str) -> Result<Preset> {
    scenario_library().into_iter().find(|p| p.name == name).ok_or_else(|| {
        let known: Vec<&str> = scenario_library().iter().map(|p| p.name).collect();
        Error::config(format!("unknown preset '{name}' (known: {})", known.join(", ")))
    })
}
