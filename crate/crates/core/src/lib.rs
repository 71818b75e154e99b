//! Simulator and analysis toolkit for the I/O of data-parallel training.
//!
//! Given a seed, the full access order of every worker is known in advance
//! ([`access`]). [`analysis`] studies the resulting per-worker access
//! frequencies, [`perfmodel`] describes the storage hierarchy and its costs,
//! [`policies`] turns streams into prefetch and caching plans, and
//! [`simulator`] evaluates those plans.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod access;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod perfmodel;
pub mod policies;
pub mod simulator;
pub mod units;

pub use access::{build_access_streams, AccessStream, PartitionSpec, Seed};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use perfmodel::{DatasetModel, DatasetSpec, SystemConfig};
pub use policies::{build_policy, PolicySpec};
pub use simulator::{simulate, SimOptions, SimResult};
